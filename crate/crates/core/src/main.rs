fn main() {
    std::process::exit(fxcert::cli::run(std::env::args_os()));
}
