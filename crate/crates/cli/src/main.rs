fn main() {
    std::process::exit(psrcast::cli::run(std::env::args_os()));
}
