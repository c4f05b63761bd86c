fn main() -> std::process::ExitCode {
    pcvit::cli::main()
}
