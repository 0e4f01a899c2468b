fn main() -> std::process::ExitCode {
    gmdkp::cli::main()
}
