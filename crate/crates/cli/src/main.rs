fn main() {
    std::process::exit(orbitq_cli::stdio_main());
}
