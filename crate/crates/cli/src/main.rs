fn main() {
    std::process::exit(c2ed2::app::main_with(std::env::args_os()));
}
