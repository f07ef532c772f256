fn main() {
    std::process::exit(skewgibbs::cli::cli_main(std::env::args_os()));
}
