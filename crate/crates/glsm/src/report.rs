//! Tab-separated dumps and the console table.

use std::fmt::Write as _;

use glsm_core::metrics::{MetricsReport, ScoredRow};

pub fn metrics_tsv(report: &MetricsReport) -> String {
    let mut out = String::from("config\tauc\tgauc\tlogloss\n");
    for r in &report.rows {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", r.name, r.auc, r.gauc, r.logloss);
    }
    out
}

pub fn metrics_table(report: &MetricsReport) -> String {
    let width = report.rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(6);
    let mut out = format!("{:<width$}  {:>7}  {:>7}  {:>8}\n", "config", "AUC", "GAUC", "Logloss");
    let _ = writeln!(out, "{}", "-".repeat(width + 30));
    for r in &report.rows {
        let _ = writeln!(out, "{:<width$}  {:>7.4}  {:>7.4}  {:>8.4}", r.name, r.auc, r.gauc, r.logloss);
    }
    out
}

/// `(config, replicate, row)` triples as `config\treplicate\tuser\tscore\tlabel`.
pub fn scores_tsv<'a>(rows: impl IntoIterator<Item = (&'a str, usize, &'a ScoredRow)>) -> String {
    let mut out = String::from("config\treplicate\tuser\tscore\tlabel\n");
    for (name, rep, r) in rows {
        let _ = writeln!(out, "{name}\t{rep}\t{}\t{}\t{}", r.user.0, r.score, u8::from(r.label));
    }
    out
}

pub fn series_tsv(header: &str, values: &[f64]) -> String {
    let mut out = format!("epoch\t{header}\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{}\t{v}", i + 1);
    }
    out
}

pub fn pairs_tsv(header: (&str, &str), pairs: &[(usize, f64)]) -> String {
    let mut out = format!("{}\t{}\n", header.0, header.1);
    for (k, v) in pairs {
        let _ = writeln!(out, "{k}\t{v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use glsm_core::metrics::MetricRow;

    #[test]
    fn table_aligns_names() {
        let report = MetricsReport {
            rows: vec![
                MetricRow {
                    name: "gate".into(),
                    auc: 0.9,
                    gauc: 0.8,
                    logloss: 0.3,
                },
                MetricRow {
                    name: "short-only".into(),
                    auc: 0.85,
                    gauc: 0.75,
                    logloss: 0.35,
                },
            ],
        };
        let t = metrics_table(&report);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[2].find("0.9000"), lines[3].find("0.8500"));
        assert_eq!(metrics_tsv(&report).lines().count(), 3);
    }
}
