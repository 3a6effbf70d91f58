fn main() {
    std::process::exit(ncgopt::harness::run_cli(std::env::args_os()));
}
