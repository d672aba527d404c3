fn main() {
    std::process::exit(tnd_bounds::cli::run_command(std::env::args()));
}
