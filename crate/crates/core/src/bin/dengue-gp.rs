fn main() {
    std::process::exit(dengue_gp::cli::run(std::env::args_os()));
}
