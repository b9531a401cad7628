fn main() {
    std::process::exit(tickflow::cli::run());
}
