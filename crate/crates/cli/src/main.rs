fn main() {
    std::process::exit(spectra_cli::run_from(std::env::args_os()));
}
