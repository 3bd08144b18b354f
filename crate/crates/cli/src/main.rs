fn main() {
    std::process::exit(mpc_kcenter_cli::parse_and_dispatch(std::env::args_os()));
}
