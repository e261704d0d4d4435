fn main() {
    std::process::exit(pointsift_cli::run(std::env::args_os()));
}
