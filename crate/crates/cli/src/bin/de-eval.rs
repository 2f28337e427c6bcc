fn main() -> std::process::ExitCode {
    de_cli::main_with(Some("eval"))
}
