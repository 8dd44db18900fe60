fn main() {
    std::process::exit(pundit::cli::run(std::env::args_os()));
}
