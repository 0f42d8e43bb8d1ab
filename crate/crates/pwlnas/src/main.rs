fn main() {
    std::process::exit(pwlnas::cli::run_from(std::env::args_os()));
}
