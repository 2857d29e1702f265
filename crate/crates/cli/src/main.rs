fn main() {
    std::process::exit(vlift_cli::main_with_args(std::env::args_os()));
}
