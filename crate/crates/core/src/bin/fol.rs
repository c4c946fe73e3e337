fn main() {
    std::process::exit(fol::cli::main_with_args(std::env::args_os()));
}
