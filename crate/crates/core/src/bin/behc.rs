fn main() {
    env_logger::init();
    std::process::exit(behc::cli::run(std::env::args_os()));
}
