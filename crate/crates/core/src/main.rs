fn main() {
    std::process::exit(chaosda::cli::run(std::env::args_os()));
}
