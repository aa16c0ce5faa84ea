fn main() {
    std::process::exit(tailconc::cli::run(std::env::args_os()));
}
