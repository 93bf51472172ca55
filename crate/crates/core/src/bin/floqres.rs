fn main() {
    std::process::exit(floqres::cli::main_with_args(std::env::args_os()));
}
