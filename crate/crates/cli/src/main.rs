fn main() {
    std::process::exit(zsl_cli::run(std::env::args_os()));
}
