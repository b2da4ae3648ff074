fn main() -> std::process::ExitCode {
    simcon_cli::run_main()
}
