fn main() {
    std::process::exit(dropsync_cli::run(std::env::args_os()));
}
