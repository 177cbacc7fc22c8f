fn main() {
    std::process::exit(hbpe_cli::run(std::env::args_os()));
}
