fn main() {
    std::process::exit(ddtrack::cli::main_with_args(std::env::args_os()));
}
