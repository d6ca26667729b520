fn main() {
    std::process::exit(incomplete_fa::cli::run(std::env::args_os()));
}
