fn main() {
    std::process::exit(lwdock::cli::main_with_args(std::env::args_os()));
}
