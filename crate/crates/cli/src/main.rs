fn main() {
    std::process::exit(dqdrec_cli::cli_main(std::env::args_os()));
}
