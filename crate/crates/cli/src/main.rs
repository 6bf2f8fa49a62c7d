use std::process::ExitCode;

use ambistop_cli::commands::{self, Cli, Command};
use ambistop_cli::{emit, init_threads, parse_values, verify, CliError};
use clap::Parser;

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match &cli.command {
        Command::Verify(a) => {
            let ids: Vec<u32> = match &a.only {
                Some(spec) => parse_values("only", spec)?
                    .into_iter()
                    .map(|x| {
                        let id = x as u32;
                        if f64::from(id) == x && verify::ALL.contains(&id) {
                            Ok(id)
                        } else {
                            Err(CliError::Config(format!("--only: no criterion {x}")))
                        }
                    })
                    .collect::<Result<_, _>>()?,
                None => verify::ALL.to_vec(),
            };
            let results = verify::run_all(&ids, |c| println!("{}", c.line()));
            if let Some(p) = &a.output {
                emit(&verify::summary_table(&results).render(), Some(p))?;
            }
            let failed = results.iter().filter(|c| !c.pass).count();
            if failed > 0 {
                return Err(CliError::VerifyFailed(failed, results.len()));
            }
            Ok(())
        }
        other => {
            let (text, out) = commands::run(other)?;
            emit(&text, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.machine_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
