fn main() -> std::process::ExitCode {
    mirrorsel::cli::main()
}
