fn main() {
    std::process::exit(bafline::cli::run(std::env::args_os()));
}
