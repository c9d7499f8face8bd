fn main() {
    std::process::exit(weak_barycenter::cli::run(std::env::args_os()));
}
