fn main() -> std::process::ExitCode {
    ocp_cli::main_with_args(std::env::args_os())
}
