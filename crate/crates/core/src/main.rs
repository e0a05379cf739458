fn main() {
    std::process::exit(prevalence_core::cli::main_with_args(std::env::args_os()));
}
