fn main() {
    std::process::exit(beac::cli::dispatch(std::env::args_os()));
}
