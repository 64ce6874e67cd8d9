fn main() {
    std::process::exit(canonical_dbar::cli::main_with_args(std::env::args_os()));
}
