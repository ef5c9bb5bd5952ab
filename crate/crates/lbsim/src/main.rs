fn main() {
    std::process::exit(lbsim::cli::run_cli(std::env::args_os().collect()));
}
