fn main() {
    std::process::exit(sigldp_cli::run_cli(std::env::args_os()));
}
