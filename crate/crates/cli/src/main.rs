fn main() -> ! {
    lstmp_cli::cli::main_entry()
}
