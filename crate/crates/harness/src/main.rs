fn main() {
    std::process::exit(daedal_harness::cli_run(std::env::args_os()));
}
