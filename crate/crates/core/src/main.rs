fn main() {
    std::process::exit(lottery::cli::main_entry(std::env::args_os()));
}
