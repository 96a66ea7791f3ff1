fn main() {
    std::process::exit(thoraguide::cli::run(std::env::args_os()));
}
