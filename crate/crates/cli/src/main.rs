fn main() {
    std::process::exit(fragqnn_cli::run(std::env::args_os()));
}
