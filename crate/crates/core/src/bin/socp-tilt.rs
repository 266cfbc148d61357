fn main() {
    std::process::exit(socp_tilt::cli::run(std::env::args_os()));
}
