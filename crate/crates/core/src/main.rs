fn main() {
    let code = p4exec::harness::cli::cli_main(std::env::args(), &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
