fn main() {
    std::process::exit(ssexp_cli::run(std::env::args_os()));
}
