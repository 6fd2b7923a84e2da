fn main() {
    std::process::exit(mtc_cli::run(std::env::args_os().collect()));
}
