fn main() {
    std::process::exit(sscover_cli::run(std::env::args_os()));
}
