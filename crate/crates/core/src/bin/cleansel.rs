fn main() {
    std::process::exit(cleansel::cli::dispatch(std::env::args_os()));
}
