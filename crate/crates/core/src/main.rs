fn main() {
    std::process::exit(rome::cli::main())
}
