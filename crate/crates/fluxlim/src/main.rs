fn main() -> std::process::ExitCode {
    std::process::ExitCode::from(fluxlim::cli::run_from_env())
}
