fn main() {
    std::process::exit(maskplan::cli::run());
}
