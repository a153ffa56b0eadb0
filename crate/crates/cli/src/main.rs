fn main() {
    std::process::exit(tagbench_cli::run(std::env::args_os()));
}
