fn main() {
    std::process::exit(failsafe::cli::cli_main(std::env::args_os()));
}
