fn main() {
    std::process::exit(fgf::cli::run(std::env::args()));
}
