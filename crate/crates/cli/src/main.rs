use clap::Parser;

fn main() {
    let cli = match dfrsim_cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage errors are configuration errors; help and version are not errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = dfrsim_cli::run(cli) {
        eprintln!("dfrsim: {e}");
        std::process::exit(e.exit_code());
    }
}
