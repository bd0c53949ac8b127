fn main() {
    std::process::exit(sprays::cli::main_entry());
}
