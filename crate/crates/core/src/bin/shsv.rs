fn main() {
    std::process::exit(shsv::cli::main_with_args(std::env::args_os()));
}
