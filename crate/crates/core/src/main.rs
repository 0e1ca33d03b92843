fn main() {
    std::process::exit(lapai::cli::main_with_args(std::env::args_os()));
}
