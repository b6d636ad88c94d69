fn main() {
    std::process::exit(lanetrust_cli::run(std::env::args_os()));
}
