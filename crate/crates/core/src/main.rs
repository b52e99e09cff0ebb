fn main() {
    std::process::exit(gravcat::cli::run(std::env::args_os()));
}
