fn main() {
    std::process::exit(servosim::cli::main());
}
