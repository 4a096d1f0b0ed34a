fn main() {
    std::process::exit(hypertune::cli::cli_main(std::env::args_os()));
}
