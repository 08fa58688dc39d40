fn main() {
    std::process::exit(namegate::commands::main());
}
