fn main() {
    std::process::exit(illumap_cli::cli::main_with_args(std::env::args_os()));
}
