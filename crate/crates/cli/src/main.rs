fn main() {
    std::process::exit(gdform_cli::main_with_args(std::env::args_os()));
}
