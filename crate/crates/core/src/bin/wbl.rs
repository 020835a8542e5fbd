fn main() {
    std::process::exit(wishart_bridge::cli::dispatch(std::env::args_os()));
}
