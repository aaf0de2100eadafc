fn main() {
    std::process::exit(cdrodeo::cli::run(std::env::args_os()));
}
