fn main() -> std::process::ExitCode {
    ffm::cli::main()
}
