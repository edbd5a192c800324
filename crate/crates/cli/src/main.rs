fn main() {
    std::process::exit(trade_reid_cli::main_with_args(std::env::args_os()));
}
