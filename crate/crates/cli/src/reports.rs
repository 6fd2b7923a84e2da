use mtc_core::handshake::bench::{self, BenchConfig, Scenario};
use mtc_core::handshake::size_model::{self, default_environments, SizeModel};

use crate::args::{BenchArgs, ReportFormat, TablesArgs};
use crate::{emit, CmdError};

pub fn scenarios(a: &BenchArgs) -> Result<Vec<Scenario>, CmdError> {
    if a.all {
        return Ok(Scenario::ALL.to_vec());
    }
    let mut out = Vec::new();
    for name in a.scenarios.iter().flat_map(|s| s.split(',')).map(str::trim).filter(|s| !s.is_empty()) {
        let s = Scenario::from_name(name).ok_or_else(|| CmdError::Usage(format!("unknown scenario {name:?}")))?;
        if !out.contains(&s) {
            out.push(s);
        }
    }
    if out.is_empty() {
        return Err(CmdError::Usage("no scenarios selected".into()));
    }
    Ok(out)
}

pub fn bench(a: BenchArgs) -> Result<(), CmdError> {
    let scenarios = scenarios(&a)?;
    if a.iterations == 0 {
        return Err(CmdError::Usage("--iterations must be positive".into()));
    }
    let report = bench::run_bench(&scenarios, &BenchConfig { iterations: a.iterations, warmup: a.warmup });
    let body = match a.format {
        ReportFormat::Markdown => bench::render_markdown(&report),
        ReportFormat::Csv => bench::render_csv(&report),
        ReportFormat::Json => serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
    };
    emit(&body, a.out.as_deref())
}

pub fn tables(a: TablesArgs) -> Result<(), CmdError> {
    let m = SizeModel::default();
    let envs = default_environments();
    let body = match a.format {
        ReportFormat::Markdown => size_model::render_markdown(&m, &envs),
        ReportFormat::Csv => size_model::render_csv(&m, &envs),
        ReportFormat::Json => {
            let v = serde_json::json!({
                "sizes": size_model::size_table(&m),
                "reduction": size_model::reduction_table(&m),
                "rp_state": size_model::rp_state_table(&envs),
            });
            serde_json::to_string_pretty(&v).expect("tables serialize") + "\n"
        }
    };
    emit(&body, a.out.as_deref())
}
