fn main() {
    std::process::exit(vimu::cli::run(std::env::args_os()));
}
