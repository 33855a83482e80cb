fn main() {
    std::process::exit(storysum::cli::main());
}
