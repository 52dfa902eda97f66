fn main() {
    std::process::exit(tomosar::cli::run_from(std::env::args_os()));
}
