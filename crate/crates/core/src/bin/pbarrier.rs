fn main() {
    std::process::exit(poisson_barrier::cli::run(std::env::args_os()));
}
