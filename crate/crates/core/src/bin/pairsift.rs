fn main() {
    std::process::exit(pairsift::cli::run(std::env::args_os()));
}
