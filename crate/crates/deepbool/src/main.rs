fn main() {
    std::process::exit(deepbool::cli::main_with(std::env::args_os()));
}
