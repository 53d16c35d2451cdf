fn main() {
    std::process::exit(roughkit_cli::run(std::env::args_os()));
}
