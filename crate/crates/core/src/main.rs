fn main() {
    std::process::exit(hopfid::cli::run(std::env::args_os()));
}
