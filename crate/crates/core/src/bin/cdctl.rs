fn main() {
    std::process::exit(cdctl::cli::main_entry());
}
