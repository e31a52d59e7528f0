use std::io;

use clap::Parser;

fn main() {
    let cli = eegdir::cli::Cli::parse();
    let code = match eegdir::run(&cli, &mut io::stdout().lock(), &mut io::stderr().lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
