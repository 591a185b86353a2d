fn main() {
    std::process::exit(mgw::cli::run_from_env());
}
