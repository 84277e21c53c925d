fn main() {
    std::process::exit(posg::cli::run(std::env::args_os()));
}
