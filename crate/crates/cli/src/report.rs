//! `caas report`: merge results files into a summary table or plot series.

use std::fmt::Write as _;
use std::path::PathBuf;

use caas_core::io::results::{fmt_sig9, sort_rows};
use caas_core::io::{read_results, Repetition, ResultRow};
use caas_core::metrics::raas_cost;
use caas_core::model::Budget;
use clap::ValueEnum;

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Plotdata,
}

fn budget_str(b: Budget) -> String {
    match b {
        Budget::Finite(v) => fmt_sig9(v),
        Budget::Infinite => "inf".into(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), fmt_sig9)
}

/// Aggregate rows when present; otherwise every row.
fn summary_rows(rows: &[ResultRow]) -> Vec<ResultRow> {
    let means: Vec<ResultRow> = rows.iter().filter(|r| r.repetition == Repetition::Mean).cloned().collect();
    if means.is_empty() {
        rows.to_vec()
    } else {
        means
    }
}

pub fn render(paths: &[PathBuf], format: Format, prompts: Option<usize>) -> Result<String, String> {
    let mut rows = Vec::new();
    for path in paths {
        rows.extend(read_results(path).map_err(|e| e.to_string())?);
    }
    sort_rows(&mut rows);
    let rows = summary_rows(&rows);
    Ok(match format {
        Format::Table => table(&rows),
        Format::Plotdata => plotdata(&rows, prompts),
    })
}

fn table(rows: &[ResultRow]) -> String {
    let header = ["policy", "rep", "budget", "nep", "ar", "nep*ar", "spent", "perf/budget"];
    let body: Vec<[String; 8]> = rows
        .iter()
        .map(|r| {
            [
                r.policy.clone(),
                r.repetition.to_string(),
                budget_str(r.budget),
                fmt_sig9(r.nep),
                opt(r.ar),
                fmt_sig9(r.nep_times_ar),
                fmt_sig9(r.spent),
                opt(r.perf_to_budget),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for line in &body {
        for (w, cell) in widths.iter_mut().zip(line) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut emit = |cells: Vec<&str>| {
        let parts: Vec<String> = cells.iter().zip(widths).map(|(c, w)| format!("{c:<w$}")).collect();
        writeln!(out, "{}", parts.join("  ").trim_end()).unwrap();
    };
    emit(header.to_vec());
    for line in &body {
        emit(line.iter().map(String::as_str).collect());
    }
    out
}

fn plotdata(rows: &[ResultRow], prompts: Option<usize>) -> String {
    let mut out = String::new();
    writeln!(out, "# policy_metrics").unwrap();
    writeln!(out, "policy,budget,nep,ar,nep_times_ar,spent").unwrap();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.policy,
            budget_str(r.budget),
            fmt_sig9(r.nep),
            opt(r.ar),
            fmt_sig9(r.nep_times_ar),
            fmt_sig9(r.spent)
        )
        .unwrap();
    }

    writeln!(out, "\n# budget_curve").unwrap();
    writeln!(out, "policy,budget,nep_times_ar").unwrap();
    for r in rows.iter().filter(|r| r.budget.is_finite()) {
        writeln!(out, "{},{},{}", r.policy, budget_str(r.budget), fmt_sig9(r.nep_times_ar)).unwrap();
    }

    writeln!(out, "\n# variant_comparison").unwrap();
    writeln!(out, "variant,budget,cost,performance,perf_to_budget").unwrap();
    let open = rows.iter().find(|r| r.policy == "open");
    if let (Some(open), Some(n)) = (open, prompts) {
        if open.nep > 0.0 {
            let cost = raas_cost(n, open.spent / open.nep);
            let perf = open.nep_times_ar;
            writeln!(out, "raas,inf,{},{},{}", fmt_sig9(cost), fmt_sig9(perf), opt(ratio(perf, cost))).unwrap();
        }
    }
    if let Some(open) = open {
        writeln!(
            out,
            "ob-caas,inf,{},{},{}",
            fmt_sig9(open.spent),
            fmt_sig9(open.nep_times_ar),
            opt(open.perf_to_budget)
        )
        .unwrap();
    }
    for r in rows.iter().filter(|r| r.policy == "ucosa" && r.budget.is_finite()) {
        writeln!(
            out,
            "lb-caas,{},{},{},{}",
            budget_str(r.budget),
            fmt_sig9(r.spent),
            fmt_sig9(r.nep_times_ar),
            opt(r.perf_to_budget)
        )
        .unwrap();
    }
    out
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}
