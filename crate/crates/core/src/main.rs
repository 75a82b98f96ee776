fn main() {
    std::process::exit(dxml::cli::main());
}
