fn main() {
    std::process::exit(jointdiff::cli::run(std::env::args_os()));
}
