fn main() {
    std::process::exit(planex::cli::cli_run(std::env::args_os()));
}
