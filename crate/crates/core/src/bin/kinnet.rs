fn main() -> std::process::ExitCode {
    kinnet::cli::main()
}
