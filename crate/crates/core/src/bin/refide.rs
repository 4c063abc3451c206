fn main() {
    std::process::exit(refide::cli::run(std::env::args_os()));
}
