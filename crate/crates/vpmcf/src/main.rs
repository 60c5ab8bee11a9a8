fn main() {
    std::process::exit(vpmcf::cli::main_with_args(std::env::args_os()));
}
