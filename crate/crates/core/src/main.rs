fn main() {
    std::process::exit(agglom::cli::run_from(std::env::args_os()));
}
