fn main() {
    std::process::exit(symreg::cli::main_with_args(std::env::args_os()));
}
