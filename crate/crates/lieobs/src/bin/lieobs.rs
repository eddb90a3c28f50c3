fn main() {
    std::process::exit(lieobs::cli::run());
}
