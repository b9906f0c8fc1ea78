//! Usage-policy statements, usage accounting, and admission control.

pub mod admission;
pub mod ledger;
pub mod statement;

pub use admission::{
    admit, admit_commitment, admit_extensible, admit_fixed, check_oversubscription,
    commitment_cases, find_statement, Admission, AdmissionDecision, AdmissionSnapshot,
    OversubscriptionKind, OversubscriptionWarning, PolicyKind, RejectReason,
};
pub use ledger::{LedgerError, UsageLedger, UsageView};
pub use statement::{
    format_duration, format_statement, parse_policy_file, parse_statement, LimitTuple,
    ParseError, ParseErrorKind, PolicyFileError, ResourceKind, StatementError,
    UsagePolicyStatement,
};
