fn main() {
    std::process::exit(kg_damp::cli::main_entry());
}
