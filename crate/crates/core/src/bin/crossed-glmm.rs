fn main() {
    std::process::exit(crossed_glmm::cli::run(std::env::args_os()));
}
