fn main() {
    std::process::exit(hrc::cli::run(std::env::args_os()));
}
