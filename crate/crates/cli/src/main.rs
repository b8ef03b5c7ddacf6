use clap::Parser;

fn main() {
    let cli = flowbench_cli::Cli::parse();
    match flowbench_cli::run(cli) {
        Ok(text) => print!("{text}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
