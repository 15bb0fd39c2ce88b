fn main() {
    std::process::exit(mapdelta_cli::run(std::env::args_os()));
}
