fn main() {
    std::process::exit(avmask::cli::main_with_args(std::env::args_os()));
}
