fn main() {
    std::process::exit(nfrl::cli::main_with_args(std::env::args_os()));
}
