fn main() {
    std::process::exit(loopdwell::cli::main_with_args(std::env::args_os()));
}
