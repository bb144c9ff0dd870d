fn main() {
    std::process::exit(hkuramoto_cli::run(std::env::args_os()));
}
