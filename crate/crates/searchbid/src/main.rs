fn main() {
    std::process::exit(searchbid::cli::main(std::env::args_os()));
}
