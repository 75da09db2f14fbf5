fn main() {
    std::process::exit(marcus_sde::cli::run(std::env::args_os()));
}
