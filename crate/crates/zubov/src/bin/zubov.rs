fn main() {
    if let Err(err) = zubov::cli::run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
