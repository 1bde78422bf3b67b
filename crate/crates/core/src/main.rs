fn main() {
    std::process::exit(nematoflow::cli::run_cli(std::env::args_os()));
}
