fn main() {
    std::process::exit(gmc::cli::run(std::env::args()));
}
