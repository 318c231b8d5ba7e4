fn main() -> std::process::ExitCode {
    tcsc_bench::cli::main_with(std::env::args_os())
}
