fn main() {
    std::process::exit(opcap::cli::run(std::env::args_os().collect()));
}
