fn main() {
    std::process::exit(geogreeks::cli::dispatch(std::env::args_os()));
}
