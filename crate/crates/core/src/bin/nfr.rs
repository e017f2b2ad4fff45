fn main() {
    std::process::exit(nfr::cli::run(std::env::args_os()));
}
