fn main() {
    std::process::exit(lingsim_cli::run(std::env::args_os()));
}
