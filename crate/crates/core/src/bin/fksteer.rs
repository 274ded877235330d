fn main() {
    std::process::exit(fksteer::cli::main_with_args(std::env::args_os()));
}
