fn main() {
    std::process::exit(gossip_minimax::cli::main_with_args(std::env::args_os()));
}
