use clap::Parser;

fn main() {
    let cli = acl_lab::cli::Cli::parse();
    if let Err(e) = acl_lab::cli::run(cli) {
        eprintln!("acl-lab: {e}");
        std::process::exit(e.exit_code());
    }
}
