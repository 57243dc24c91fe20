use std::path::PathBuf;
use std::process::ExitCode;

use charwave::{builtin, load_config, run_to_dir};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "charwave", version, about = "Conservative solutions of the variational wave equation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a config file (or `builtin:NAME`) and write its report.
    Run {
        config: String,
        /// Output directory, overriding `out` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// `key=value` overrides.
        #[arg(long = "override", value_name = "KEY=VALUE", num_args = 1..)]
        overrides: Vec<String>,
    },
    /// List the built-in configs.
    Scenarios,
    /// Print a built-in config.
    Show { name: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Scenarios => {
            for (name, text) in builtin::BUILTINS {
                let first = text.lines().next().unwrap_or("").trim_start_matches('#').trim();
                println!("{name:<20} {first}");
            }
            ExitCode::SUCCESS
        }
        Cmd::Show { name } => match builtin::get(&name) {
            Some(t) => {
                print!("{t}");
                ExitCode::SUCCESS
            }
            None => {
                eprintln!("error: no builtin config `{name}`");
                ExitCode::from(2)
            }
        },
        Cmd::Run { config, out, overrides } => {
            let cfg = match load_config(&config, &overrides) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let dir = out.unwrap_or_else(|| cfg.out_dir.clone());
            match run_to_dir(&cfg, &dir) {
                Ok(art) => {
                    print!("{}", charwave::output::summary_text(&art.report));
                    println!("report written to {}", dir.display());
                    if art.report.passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
