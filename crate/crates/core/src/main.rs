fn main() {
    let code = flowtab::cli::run(std::env::args_os());
    std::process::exit(code);
}
