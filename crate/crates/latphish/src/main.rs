fn main() {
    std::process::exit(latphish::cli::dispatch(std::env::args()));
}
