fn main() {
    std::process::exit(avembed_cli::run(std::env::args_os()));
}
