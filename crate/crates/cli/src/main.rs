fn main() {
    std::process::exit(soilmap_cli::run_args(std::env::args_os()));
}
