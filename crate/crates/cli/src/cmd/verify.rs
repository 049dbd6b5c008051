use std::path::PathBuf;

use clap::{Args, ValueEnum};
use qpa_core::lab::run_claims;
use qpa_core::qpa::{CnotOrder, Encoding, QpaCircuit};

use crate::{usage, write_json, Log};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OrderArg {
    QueryFirst,
    KeyFirst,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EncodingArg {
    ThreeStep,
    Independent,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Run only this claim; repeatable.
    #[arg(long = "claim", value_name = "ID")]
    claims: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CNOT ordering of the circuit under test.
    #[arg(long, value_enum, default_value = "query-first")]
    cnot_order: OrderArg,
    #[arg(long, value_enum, default_value = "three-step")]
    encoding: EncodingArg,
    /// Also write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(args: VerifyArgs, log: Log) -> anyhow::Result<bool> {
    let circuit = QpaCircuit {
        encoding: match args.encoding {
            EncodingArg::ThreeStep => Encoding::ThreeStep,
            EncodingArg::Independent => Encoding::Independent,
        },
        order: match args.cnot_order {
            OrderArg::QueryFirst => CnotOrder::QueryControlFirst,
            OrderArg::KeyFirst => CnotOrder::KeyControlFirst,
        },
    };
    let report = run_claims(circuit, &args.claims, args.seed).map_err(|e| usage(e.to_string()))?;
    for c in &report.claims {
        log.info(format_args!("{} {:<10} {}", if c.passed { "PASS" } else { "FAIL" }, c.id, c.description));
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    Ok(report.passed)
}
