fn main() {
    std::process::exit(tilted_vae::cli::main());
}
