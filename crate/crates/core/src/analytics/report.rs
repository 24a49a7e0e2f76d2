//! Report files: `runs.csv`, `descriptives.md`, `anova.md`, `scatter.csv`.
//!
//! Output depends only on the record list and its order, so identical inputs
//! give byte-identical files.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use super::{descriptive, group_by, AnovaRow, Factor, Metric};
use crate::domain::{RunRecord, RunStatus};

pub const RUNS_CSV_COLUMNS: [&str; 18] = [
    "run_id",
    "project",
    "process",
    "model",
    "seed",
    "status",
    "failure_reason",
    "s1_files",
    "s2_loc",
    "s3_tokens_per_loc",
    "c1_total_tokens",
    "c2_wall_time_s",
    "q1_code_smells",
    "q2_vulnerabilities",
    "q3_ai_bug_rate",
    "q4_human_bug_rate",
    "artifact_files",
    "transcript_path",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub runs_csv: PathBuf,
    pub descriptives_md: PathBuf,
    pub anova_md: PathBuf,
    pub scatter_csv: PathBuf,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// p-value with significance stars: `**` below 0.01, `*` below 0.05.
pub fn format_p(p: f64) -> String {
    let stars = if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    };
    if p < 0.001 {
        format!("<0.001{stars}")
    } else {
        format!("{p:.3}{stars}")
    }
}

pub fn format_f(f: f64) -> String {
    if f.is_infinite() {
        "inf".to_string()
    } else {
        format!("{f:.2}")
    }
}

fn format_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn runs_csv(records: &[RunRecord]) -> io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RUNS_CSV_COLUMNS)?;
    for r in records {
        let (status, reason) = match &r.status {
            RunStatus::Completed => ("completed", String::new()),
            RunStatus::Failed(why) => ("failed", why.clone()),
        };
        w.write_record([
            r.run_id(),
            r.config.project.id.clone(),
            r.config.process.slug().to_string(),
            r.config.model_label.clone(),
            r.config.seed.to_string(),
            status.to_string(),
            reason,
            r.size.files.to_string(),
            r.size.loc.to_string(),
            opt(r.size.tokens_per_loc),
            r.cost.total_tokens.to_string(),
            r.cost.wall_time.to_string(),
            opt(r.quality.code_smells),
            opt(r.quality.vulnerabilities),
            opt(r.quality.ai_bug_rate),
            opt(r.quality.human_bug_rate),
            r.size.artifact_files.to_string(),
            r.transcript_path.clone(),
        ])?;
    }
    w.into_inner().map_err(|e| io::Error::other(e.to_string()))
}

fn scatter_csv(records: &[RunRecord]) -> io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["total_tokens", "loc", "process"])?;
    for r in records.iter().filter(|r| r.status.is_completed()) {
        w.write_record([r.cost.total_tokens.to_string(), r.size.loc.to_string(), r.config.process.label().to_string()])?;
    }
    w.into_inner().map_err(|e| io::Error::other(e.to_string()))
}

const DESCRIPTIVE_TABLES: [(&str, Metric, Metric); 3] = [
    ("Size", Metric::Files, Metric::Loc),
    ("Cost", Metric::WallTime, Metric::TotalTokens),
    ("Quality", Metric::AiBugRate, Metric::HumanBugRate),
];

fn short(metric: Metric) -> &'static str {
    match metric {
        Metric::Files => "No. of Files",
        Metric::Loc => "No. of LOC",
        Metric::WallTime => "Execution Time (s)",
        Metric::TotalTokens => "Total Tokens Used",
        Metric::AiBugRate => "Tester Failure Rate",
        Metric::HumanBugRate => "Manual Failure Rate",
        other => other.label(),
    }
}

fn descriptives_md(records: &[RunRecord]) -> String {
    let mut out = String::from("# Descriptive statistics\n");
    for factor in [Factor::ProcessModel, Factor::ModelLabel] {
        let _ = writeln!(out, "\n## By {}\n", factor.label());
        for (title, a, b) in DESCRIPTIVE_TABLES {
            let ga = group_by(records, factor, a);
            let gb = group_by(records, factor, b);
            let _ = writeln!(out, "### {title}\n");
            let _ = writeln!(
                out,
                "| {} | {sa} Min | {sa} Med. | {sa} Max | {sb} Min | {sb} Med. | {sb} Max |",
                factor.label(),
                sa = short(a),
                sb = short(b)
            );
            out.push_str("|---|---:|---:|---:|---:|---:|---:|\n");
            for ((level, va), (_, vb)) in ga.levels.iter().zip(&gb.levels) {
                let _ = write!(out, "| {level} |");
                for vals in [va, vb] {
                    match descriptive(vals) {
                        Ok(s) => {
                            let _ = write!(out, " {} | {} | {} |", format_num(s.min), format_num(s.median), format_num(s.max));
                        }
                        Err(_) => out.push_str(" – | – | – |"),
                    }
                }
                out.push('\n');
            }
            out.push('\n');
        }
    }
    out
}

fn anova_md(rows: &[AnovaRow]) -> String {
    let mut out = String::from("# One-way ANOVA\n\nSignificance: ** p < 0.01, * p < 0.05.\n");
    for factor in [Factor::ProcessModel, Factor::ModelLabel] {
        let _ = writeln!(out, "\n## Effect of {}\n", factor.label());
        out.push_str("| Metric | F-Statistic | df | p-value |\n|---|---:|---:|---:|\n");
        for row in rows.iter().filter(|r| r.factor == factor) {
            match &row.outcome {
                Ok(r) => {
                    let _ = writeln!(
                        out,
                        "| {} | {} | ({}, {}) | {} |",
                        row.metric.label(),
                        format_f(r.f_stat),
                        r.df_between,
                        r.df_within,
                        format_p(r.p_value)
                    );
                }
                Err(e) => {
                    let _ = writeln!(out, "| {} | InsufficientData | – | – ({e}) |", row.metric.label());
                }
            }
        }
    }
    out
}

/// Writes the four report files into `out_dir`.
pub fn emit_report(rows: &[AnovaRow], records: &[RunRecord], out_dir: &Path) -> io::Result<ReportFiles> {
    std::fs::create_dir_all(out_dir)?;
    let files = ReportFiles {
        runs_csv: out_dir.join("runs.csv"),
        descriptives_md: out_dir.join("descriptives.md"),
        anova_md: out_dir.join("anova.md"),
        scatter_csv: out_dir.join("scatter.csv"),
    };
    std::fs::write(&files.runs_csv, runs_csv(records)?)?;
    std::fs::write(&files.descriptives_md, descriptives_md(records))?;
    std::fs::write(&files.anova_md, anova_md(rows))?;
    std::fs::write(&files.scatter_csv, scatter_csv(records)?)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::super::anova_table;
    use super::super::tests::record;
    use super::*;
    use crate::domain::ProcessModel;

    #[test]
    fn p_formatting() {
        assert_eq!(format_p(0.041), "0.041*");
        assert_eq!(format_p(0.0), "<0.001**");
        assert_eq!(format_p(0.0009), "<0.001**");
        assert_eq!(format_p(0.0072), "0.007**");
        assert_eq!(format_p(0.0726), "0.073");
        assert_eq!(format_p(1.0), "1.000");
    }

    #[test]
    fn single_run_report() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![record("snake", ProcessModel::Agile, "mock-a", 3)];
        let rows = anova_table(&recs);
        let files = emit_report(&rows, &recs, dir.path()).unwrap();
        let csv = std::fs::read_to_string(&files.runs_csv).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().next().unwrap(), RUNS_CSV_COLUMNS.join(","));
        let anova = std::fs::read_to_string(&files.anova_md).unwrap();
        assert_eq!(anova.matches("InsufficientData").count(), 10);
        let desc = std::fs::read_to_string(&files.descriptives_md).unwrap();
        assert!(desc.contains("| Agile | 3 | 3 | 3 | 60 | 60 | 60 |"), "{desc}");
    }
}
