fn main() {
    std::process::exit(slowscale::cli::main());
}
