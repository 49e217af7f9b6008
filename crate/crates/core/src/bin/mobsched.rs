fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MOBSCHED_LOG", "warn")).init();
    std::process::exit(mobsched::cli::run(std::env::args_os()));
}
