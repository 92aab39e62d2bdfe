use clap::Parser;

fn main() {
    let cli = vacrad::cli::Cli::parse();
    std::process::exit(vacrad::cli::main_with(cli));
}
