fn main() {
    std::process::exit(sctnet_cli::run(std::env::args_os()));
}
