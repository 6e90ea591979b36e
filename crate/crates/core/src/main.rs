fn main() -> std::process::ExitCode {
    std::process::ExitCode::from(qfsru::cli::run(std::env::args_os()))
}
