fn main() {
    env_logger::init();
    std::process::exit(tblockgs::cli::run(std::env::args_os()));
}
