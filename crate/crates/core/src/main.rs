fn main() {
    if let Err(err) = crispedge::cli::run() {
        eprintln!("error: {}", err);
        std::process::exit(err.exit_code());
    }
}
