fn main() {
    std::process::exit(vosim::cli::main_with_args(std::env::args_os()));
}
