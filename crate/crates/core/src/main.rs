fn main() -> std::process::ExitCode {
    drgen::cli::main()
}
