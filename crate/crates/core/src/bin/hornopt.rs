fn main() {
    hornopt::cli::init_logging();
    std::process::exit(hornopt::cli::main_with_args(std::env::args_os()));
}
