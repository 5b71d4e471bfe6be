fn main() -> std::process::ExitCode {
    vldcop::harness::cli::main()
}
