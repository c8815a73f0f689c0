fn main() {
    std::process::exit(bpilab::cli::main_with_args(std::env::args_os()));
}
