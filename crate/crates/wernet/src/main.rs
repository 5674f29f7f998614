fn main() {
    std::process::exit(wernet::cli::main_with(std::env::args_os()));
}
