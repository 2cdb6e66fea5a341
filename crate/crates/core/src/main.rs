fn main() {
    let code = hmm_entropy::cli::run(std::env::args_os());
    std::process::exit(code);
}
