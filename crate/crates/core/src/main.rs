fn main() {
    std::process::exit(hrc_predict::cli::main_with_args(std::env::args_os()));
}
