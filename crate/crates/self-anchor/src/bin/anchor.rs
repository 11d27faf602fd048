fn main() {
    std::process::exit(self_anchor::cli::run_cli());
}
