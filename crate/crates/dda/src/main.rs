fn main() {
    std::process::exit(dda::cli::run(std::env::args_os()));
}
