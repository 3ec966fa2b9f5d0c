fn main() {
    std::process::exit(gglr_cli::run(std::env::args_os()));
}
