fn main() {
    std::process::exit(qcascade::cli::run(std::env::args_os()));
}
