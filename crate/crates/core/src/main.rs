fn main() {
    std::process::exit(lorentz_carleman::cli_report::run(std::env::args_os()));
}
