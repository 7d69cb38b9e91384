fn main() {
    std::process::exit(fracsob::cli::run_args(std::env::args_os()));
}
