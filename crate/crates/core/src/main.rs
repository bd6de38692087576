fn main() {
    std::process::exit(chainbalance::cli::main_with_args(std::env::args_os()));
}
