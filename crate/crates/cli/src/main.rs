fn main() {
    std::process::exit(nowcast_cli::run(std::env::args_os()));
}
