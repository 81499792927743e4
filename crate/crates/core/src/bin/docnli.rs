fn main() {
    std::process::exit(docnli::cli::run(std::env::args_os()));
}
