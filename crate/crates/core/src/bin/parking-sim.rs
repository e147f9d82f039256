fn main() {
    std::process::exit(parking_storage::cli::run(std::env::args_os()));
}
