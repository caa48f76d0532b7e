fn main() {
    std::process::exit(sdemath::cli::main_with_args(std::env::args_os()));
}
