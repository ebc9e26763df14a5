fn main() {
    std::process::exit(wordpix::cli::run(std::env::args_os()));
}
