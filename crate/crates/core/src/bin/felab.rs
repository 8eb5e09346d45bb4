fn main() {
    std::process::exit(felab::cli::main());
}
