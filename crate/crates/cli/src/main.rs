fn main() {
    std::process::exit(alpha_digger_cli::main_with_args(std::env::args_os()));
}
