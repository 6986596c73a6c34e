fn main() {
    std::process::exit(blowuplab::cli::main_with_args(std::env::args_os()));
}
