fn main() {
    std::process::exit(binreg_cli::run(std::env::args_os()));
}
