fn main() {
    std::process::exit(dvkit::cli::main_with_args(std::env::args_os()));
}
