fn main() {
    std::process::exit(tgv_core::cli::run_cli(std::env::args_os(), &mut std::io::stdout()));
}
