fn main() {
    std::process::exit(replaycache::cli::run_cli(std::env::args_os()));
}
