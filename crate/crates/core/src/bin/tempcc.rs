fn main() {
    std::process::exit(tempcc::cli::main());
}
