fn main() {
    std::process::exit(eagc_cli::run(std::env::args_os()));
}
