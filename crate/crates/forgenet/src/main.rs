fn main() { std::process::exit(forgenet::cli::run()); }
