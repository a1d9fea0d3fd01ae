use std::path::Path;
use std::process::ExitCode;

use renet::experiment::{cmd_compare, cmd_entropy, cmd_run, cmd_validate, ExperimentConfig, ExperimentError};

const USAGE: &str = "usage:
  renet run      [--config FILE] [--key value]...
  renet compare  [--config FILE] [--key value]...
  renet entropy  [--config FILE] [--key value]...
  renet validate SNAPSHOT.json

keys: workload n m m-per-n alpha k seed trace c d r rotation-accounting
      virtual-root-policy sparsity-delta baselines out repetitions window
      stride entropy-base debug-invariants
lists (workload, n, baselines) take comma-separated values";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some((cmd, rest)) = args.split_first() else {
        eprintln!("{USAGE}");
        return ExitCode::from(2);
    };
    match dispatch(cmd, rest) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: &str, rest: &[String]) -> Result<u8, ExperimentError> {
    match cmd {
        "run" => {
            let cfg = ExperimentConfig::from_args(rest)?;
            let mut code = 0;
            for s in cmd_run(&cfg)? {
                println!(
                    "{} n={} m={} seed={} avg_cost={:.4} avg_cost_with_coord={:.4} resets={} sparse={} invariants={}",
                    s.workload,
                    s.n,
                    s.m,
                    s.seed,
                    s.avg_cost,
                    s.avg_cost_with_coord,
                    s.resets,
                    s.sparsity.ok,
                    if s.invariants_ok { "ok" } else { "FAILED" }
                );
                if s.sparsity_warning {
                    eprintln!(
                        "warning: trace is not ({}, {})-sparse ({} unique pairs from request {})",
                        s.params.c, s.sparsity_delta, s.sparsity.worst_unique_pairs, s.sparsity.worst_window_start
                    );
                }
                for v in &s.violations {
                    eprintln!("violation: {v}");
                }
                if !s.invariants_ok {
                    code = 1;
                }
            }
            println!("wrote {}", cfg.out.display());
            Ok(code)
        }
        "compare" => {
            let cfg = ExperimentConfig::from_args(rest)?;
            cmd_compare(&cfg)?;
            print!("{}", std::fs::read_to_string(cfg.out.join("compare.csv")).unwrap_or_default());
            Ok(0)
        }
        "entropy" => {
            let cfg = ExperimentConfig::from_args(rest)?;
            println!("wrote {}", cmd_entropy(&cfg)?.display());
            Ok(0)
        }
        "validate" => {
            let [path] = rest else {
                return Err(ExperimentError::Usage(format!("validate takes one snapshot path\n{USAGE}")));
            };
            let violations = cmd_validate(Path::new(path))?;
            for v in &violations {
                println!("violation: {v}");
            }
            if violations.is_empty() {
                println!("ok");
                Ok(0)
            } else {
                Ok(1)
            }
        }
        "-h" | "--help" | "help" => {
            println!("{USAGE}");
            Ok(0)
        }
        other => Err(ExperimentError::Usage(format!("unknown command `{other}`\n{USAGE}"))),
    }
}
