fn main() {
    std::process::exit(tactile_cran::experiments::cli_main(std::env::args_os()));
}
