fn main() {
    std::process::exit(spsm::cli::run(std::env::args_os()));
}
