fn main() {
    std::process::exit(spdelab::cli::main_with_args(std::env::args_os()));
}
