fn main() {
    env_logger::init();
    std::process::exit(emgwire::cli::main_with_std());
}
