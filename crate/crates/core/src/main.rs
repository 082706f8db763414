fn main() -> std::process::ExitCode {
    unilink::cli::run()
}
