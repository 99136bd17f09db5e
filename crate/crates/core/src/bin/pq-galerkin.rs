fn main() {
    std::process::exit(pq_galerkin::cli::run(std::env::args_os()));
}
