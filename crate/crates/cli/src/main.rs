fn main() {
    std::process::exit(ahead_cli::cli::main_with_args(std::env::args_os()));
}
