fn main() -> std::process::ExitCode {
    vortexlab::cli::main()
}
