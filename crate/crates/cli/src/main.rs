fn main() { std::process::exit(crgen_cli::run(std::env::args().collect())); }
