fn main() {
    let code = ris_optim::cli::run(std::env::args().skip(1));
    std::process::exit(code);
}
