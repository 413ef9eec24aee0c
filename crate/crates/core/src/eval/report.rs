use std::fmt::Write;

use super::{mean_std, EvalReport, GroupMetrics, OfflineResult, OnlineResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "table" | "plain-table" => Ok(ReportFormat::Table),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(format!("unknown report format {s:?} (expected table, json or csv)")),
        }
    }
}

/// `mean±std` in percent with one decimal.
pub fn sr_cell(mean: f64, std: f64) -> String {
    format!("{:.1}±{:.1}", 100.0 * mean, 100.0 * std)
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out += &line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect());
    for r in rows {
        out += &line(r.iter().map(String::as_str).collect());
    }
    out
}

fn offline_rows(r: &OfflineResult) -> Vec<(String, &GroupMetrics)> {
    let mut rows: Vec<(String, &GroupMetrics)> = r.groups.iter().map(|(g, m)| (g.clone(), m)).collect();
    if !rows.is_empty() {
        rows.push(("all".into(), &r.overall));
    }
    rows
}

/// Per-run averages across variations, so the summary row has a std too.
fn online_summary(r: &OnlineResult) -> Option<(f64, f64)> {
    if r.variations.is_empty() {
        return None;
    }
    let per_run: Vec<f64> = (0..r.runs)
        .map(|k| r.variations.iter().map(|v| v.sr_runs[k]).sum::<f64>() / r.variations.len() as f64)
        .collect();
    Some(mean_std(&per_run))
}

fn render_offline(r: &OfflineResult, csv: bool) -> String {
    let rows: Vec<Vec<String>> = offline_rows(r)
        .into_iter()
        .map(|(g, m)| vec![g, m.keysteps.to_string(), format!("{:.1}", m.act), format!("{:.1}", m.obj), format!("{:.1}", m.grd)])
        .collect();
    if csv {
        let mut out = String::from("group,keysteps,act,obj,grd\n");
        for row in rows {
            out += &(row.join(",") + "\n");
        }
        out
    } else {
        table(&["group", "keysteps", "Act", "Obj", "Grd"], &rows)
    }
}

fn render_online(r: &OnlineResult, csv: bool) -> String {
    if csv {
        let mut out = String::from("task,variation,group,mean,std,runs\n");
        for v in &r.variations {
            let runs: Vec<String> = v.sr_runs.iter().map(|s| s.to_string()).collect();
            let _ = writeln!(out, "{},{},{},{},{},{}", v.task, v.variation, v.group, v.mean, v.std, runs.join(";"));
        }
        return out;
    }
    let mut rows: Vec<Vec<String>> =
        r.variations.iter().map(|v| vec![v.key(), v.group.clone(), sr_cell(v.mean, v.std)]).collect();
    if let Some((m, s)) = online_summary(r) {
        rows.push(vec!["avg".into(), String::new(), sr_cell(m, s)]);
    }
    table(&["variation", "group", "SR (%)"], &rows)
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    match (report, format) {
        (r, ReportFormat::Json) => serde_json::to_string_pretty(r).expect("reports serialize") + "\n",
        (EvalReport::Offline(r), f) => render_offline(r, f == ReportFormat::Csv),
        (EvalReport::Online(r), f) => render_online(r, f == ReportFormat::Csv),
    }
}
