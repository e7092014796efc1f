fn main() {
    std::process::exit(rulkit_cli::run(std::env::args_os()));
}
