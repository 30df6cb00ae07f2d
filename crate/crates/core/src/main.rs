fn main() {
    std::process::exit(grwp::cli::main_with_args(std::env::args_os()));
}
