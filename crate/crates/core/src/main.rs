fn main() {
    std::process::exit(adares::cli::run_from(std::env::args_os()));
}
