fn main() {
    std::process::exit(uniband::cli::run(std::env::args_os()));
}
