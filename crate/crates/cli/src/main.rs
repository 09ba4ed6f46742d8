fn main() {
    std::process::exit(frame_induction_cli::run(std::env::args_os()));
}
