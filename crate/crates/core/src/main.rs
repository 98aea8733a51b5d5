fn main() {
    std::process::exit(optocat::cli::run());
}
