fn main() {
    std::process::exit(rsf::cli::run(std::env::args_os()));
}
