fn main() {
    std::process::exit(koethe::cli::run(std::env::args_os()));
}
