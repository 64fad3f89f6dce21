//! Plain-text tables of stored records.
//!
//! Evaluation tables have one column per model and one row per method, with
//! per-stratum rows under each stratified estimate. A `+` after a value
//! marks a significant win over the baseline model in a paired t-test, a `-`
//! a significant loss.

use std::fmt::Write as _;

use strateval::evaluators::Method;

use crate::commands::{metric_spec_order, CompareRecord, EvalRecord};

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn render(&self, markdown: bool, out: &mut String) {
        if markdown {
            writeln!(out, "| {} |", self.header.join(" | ")).unwrap();
            writeln!(out, "|{}", "---|".repeat(self.header.len())).unwrap();
            for r in &self.rows {
                writeln!(out, "| {} |", r.join(" | ")).unwrap();
            }
        } else {
            writeln!(out, "{}", self.header.join("\t")).unwrap();
            for r in &self.rows {
                writeln!(out, "{}", r.join("\t")).unwrap();
            }
        }
    }
}

fn cell(rec: &EvalRecord) -> String {
    let mark = match (rec.significant, rec.t) {
        (true, Some(t)) if t > 0.0 => "+",
        (true, Some(_)) => "-",
        _ => "",
    };
    format!("{:.4}{mark}", rec.value)
}

pub fn eval_table(records: &[EvalRecord], markdown: bool) -> String {
    let mut models: Vec<&str> = Vec::new();
    for r in records {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    let baseline = records.iter().find_map(|r| r.baseline.as_deref());
    let mut out = String::new();
    for metric in metric_spec_order(records) {
        let mut keys: Vec<(Method, Option<usize>)> = Vec::new();
        for r in records.iter().filter(|r| r.metric == metric) {
            if !keys.contains(&(r.method, r.strata_k)) {
                keys.push((r.method, r.strata_k));
            }
        }
        let mut header = vec!["method".to_string(), "stratum".into(), "feedback".into()];
        header.extend(models.iter().map(|m| match baseline {
            Some(b) if b == *m => format!("{m} (baseline)"),
            _ => m.to_string(),
        }));
        let mut table = Table { header, rows: Vec::new() };
        for (method, k) in keys {
            let row_of = |m: &str| {
                records
                    .iter()
                    .find(|r| r.model == m && r.metric == metric && r.method == method && r.strata_k == k)
            };
            let name = match k {
                Some(k) => format!("{method} K={k}"),
                None => method.to_string(),
            };
            if let Some(first) = models.iter().find_map(|m| row_of(m)).and_then(|r| r.strata.clone()) {
                let total: usize = first.iter().map(|s| s.interactions).sum();
                for (s, stratum) in first.iter().enumerate() {
                    let mut row = vec![
                        if s == 0 { name.clone() } else { String::new() },
                        format!("Q{}", stratum.stratum),
                        format!("{} ({:.0}%)", stratum.interactions, 100.0 * stratum.weight),
                    ];
                    row.extend(models.iter().map(|m| {
                        row_of(m)
                            .and_then(|r| r.strata.as_ref())
                            .and_then(|rows| rows.get(s))
                            .map_or_else(
                                || "-".to_string(),
                                |v| v.value.map_or_else(|| "-".to_string(), |x| format!("{x:.4}")),
                            )
                    }));
                    table.rows.push(row);
                }
                let mut row = vec![String::new(), "overall".into(), total.to_string()];
                row.extend(models.iter().map(|m| row_of(m).map_or_else(|| "-".into(), cell)));
                table.rows.push(row);
            } else {
                let mut row = vec![name, String::new(), String::new()];
                row.extend(models.iter().map(|m| row_of(m).map_or_else(|| "-".into(), cell)));
                table.rows.push(row);
            }
        }
        if markdown {
            writeln!(out, "### {metric}\n").unwrap();
        } else {
            writeln!(out, "# {metric}").unwrap();
        }
        table.render(markdown, &mut out);
        out.push('\n');
    }
    out
}

pub fn compare_table(records: &[CompareRecord], markdown: bool) -> String {
    let Some(first) = records.first() else { return String::new() };
    let header = vec![
        "metric".to_string(),
        format!("tau({})", first.baseline),
        format!("tau({})", first.candidate),
        "tau(y,z)".into(),
        "steiger z".into(),
        "p".into(),
    ];
    let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    let rows = records
        .iter()
        .map(|r| {
            let c = &r.report;
            let mark = if c.p.is_some_and(|p| p < 0.05) { "*" } else { "" };
            vec![
                r.metric.clone(),
                format!("{:.4}", c.tau_xy),
                format!("{:.4}{mark}", c.tau_xz),
                format!("{:.4}", c.tau_yz),
                f(c.steiger_z),
                f(c.p),
            ]
        })
        .collect();
    let mut out = String::new();
    Table { header, rows }.render(markdown, &mut out);
    out
}
