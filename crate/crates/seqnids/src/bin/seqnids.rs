fn main() {
    std::process::exit(seqnids::cli::run(std::env::args_os()));
}
