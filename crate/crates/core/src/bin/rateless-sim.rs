fn main() {
    std::process::exit(rateless_nca::cli::parse_and_dispatch(std::env::args_os()));
}
