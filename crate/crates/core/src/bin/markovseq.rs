fn main() {
    std::process::exit(markovseq::cli::run(std::env::args_os()));
}
