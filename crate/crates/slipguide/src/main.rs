fn main() {
    std::process::exit(slipguide::cli::main_with(std::env::args_os()));
}
