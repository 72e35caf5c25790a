fn main() {
    std::process::exit(idc::cli::main_with_args(std::env::args_os()));
}
