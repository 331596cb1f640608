use mimo_altmin::cli;

fn main() {
    std::process::exit(cli::parse_and_run(std::env::args_os()));
}
