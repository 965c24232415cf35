fn main() {
    std::process::exit(hydrosched::frontend::cli_main(std::env::args_os()));
}
