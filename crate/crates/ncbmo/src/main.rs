fn main() {
    std::process::exit(ncbmo::cli::main_entry());
}
