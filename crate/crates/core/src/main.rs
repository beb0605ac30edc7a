fn main() {
    std::process::exit(oslr::cli::main_with_args(std::env::args_os()));
}
