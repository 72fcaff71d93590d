fn main() {
    std::process::exit(anchor_relabel::cli::run(std::env::args_os()));
}
