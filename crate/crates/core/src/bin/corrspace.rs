fn main() {
    std::process::exit(corrspace::cli::main_with_args(std::env::args_os()));
}
