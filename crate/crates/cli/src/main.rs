fn main() -> std::process::ExitCode {
    semmap_cli::app::main()
}
