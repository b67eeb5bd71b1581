fn main() {
    hedgetree::cli::init_logging();
    std::process::exit(hedgetree::cli::main_with_args(std::env::args_os()));
}
