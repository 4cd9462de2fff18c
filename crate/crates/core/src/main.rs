fn main() {
    std::process::exit(kawahara_strip::cli::run_cli(std::env::args_os()));
}
