fn main() {
    std::process::exit(engram_cli::cli_main(std::env::args_os()));
}
