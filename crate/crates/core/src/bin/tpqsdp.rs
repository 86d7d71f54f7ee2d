fn main() {
    std::process::exit(tpq_sdp::cli::main_with_args(std::env::args_os()));
}
