use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use aerocl::metrics::MetricsReport;

use crate::error::{CliError, CliResult};

const COLUMNS: [&str; 6] = ["ap", "bwt", "fwt", "c1", "c2", "c3"];

fn find_metrics(dir: &Path, found: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let path = e.path();
        if e.file_type()?.is_dir() {
            find_metrics(&path, found)?;
        } else if e.file_name() == "metrics.json" {
            found.push(path);
        }
    }
    Ok(())
}

/// Linearly interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Median and interquartile range; `None` when no run defines the value.
fn median_iqr(values: impl Iterator<Item = Option<f64>>) -> Option<(f64, f64)> {
    let mut v: Vec<f64> = values.flatten().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some((quantile(&v, 0.5), quantile(&v, 0.75) - quantile(&v, 0.25)))
}

fn column(r: &MetricsReport, name: &str) -> Option<f64> {
    match name {
        "ap" => Some(r.ap),
        "bwt" => r.bwt,
        "fwt" => r.fwt,
        "c1" => Some(r.c1),
        "c2" => Some(r.c2),
        _ => r.c3,
    }
}

fn row_label(r: &MetricsReport) -> String {
    let mut s = r.method.clone();
    if let Some(a) = &r.allocator {
        s.push('/');
        s.push_str(a);
    }
    if let Some(b) = r.budget {
        s.push_str(&format!(" B={b}"));
    }
    s
}

type Groups = BTreeMap<String, BTreeMap<String, Vec<MetricsReport>>>;

fn render_text(groups: &Groups) -> String {
    let mut out = String::new();
    for (order, rows) in groups {
        out.push_str(&format!("order: {order}\n"));
        let width = rows.keys().map(String::len).max().unwrap_or(0).max(6);
        out.push_str(&format!("{:<width$}  {:>3}", "method", "n"));
        for c in COLUMNS {
            out.push_str(&format!("  {:>17}", c.to_uppercase()));
        }
        out.push('\n');
        for (label, runs) in rows {
            out.push_str(&format!("{label:<width$}  {:>3}", runs.len()));
            for c in COLUMNS {
                let cell = match median_iqr(runs.iter().map(|r| column(r, c))) {
                    Some((m, iqr)) => format!("{m:+.4} ± {iqr:.4}"),
                    None => "n/a".into(),
                };
                out.push_str(&format!("  {cell:>17}"));
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

fn render_csv(groups: &Groups) -> String {
    let mut out = String::from("order,method,n");
    for c in COLUMNS {
        out.push_str(&format!(",{c}_median,{c}_iqr"));
    }
    out.push('\n');
    for (order, rows) in groups {
        for (label, runs) in rows {
            out.push_str(&format!("{order},{label},{}", runs.len()));
            for c in COLUMNS {
                match median_iqr(runs.iter().map(|r| column(r, c))) {
                    Some((m, iqr)) => out.push_str(&format!(",{m},{iqr}")),
                    None => out.push_str(",,"),
                }
            }
            out.push('\n');
        }
    }
    out
}

/// Per-step C1/C3 of every run; step 0 is the pretrained model.
fn render_traces(groups: &Groups) -> String {
    let mut out = String::from("order,method,seed,step,c1,c3\n");
    for (order, rows) in groups {
        for (label, runs) in rows {
            for r in runs {
                for (k, c1) in r.c1_trace.iter().enumerate() {
                    let c3 = if k == 0 { None } else { r.c3_trace.get(k - 1).copied().flatten() };
                    let c3 = c3.map(|v| v.to_string()).unwrap_or_default();
                    out.push_str(&format!("{order},{label},{},{k},{c1},{c3}\n", r.seed));
                }
            }
        }
    }
    out
}

pub fn compare(dir: &Path, out: Option<&Path>) -> CliResult<()> {
    if !dir.is_dir() {
        return Err(CliError::missing(format!("results directory {} not found", dir.display())));
    }
    let mut files = Vec::new();
    find_metrics(dir, &mut files)?;
    let mut groups = Groups::new();
    for path in &files {
        let parsed = fs::read_to_string(path)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str::<MetricsReport>(&t).map_err(|e| e.to_string()));
        match parsed {
            Ok(r) => groups.entry(r.order.clone()).or_default().entry(row_label(&r)).or_default().push(r),
            Err(e) => log::warn!("skipping {}: {e}", path.display()),
        }
    }
    if groups.is_empty() {
        return Err(CliError::missing(format!("no readable metrics.json under {}", dir.display())));
    }
    for rows in groups.values_mut() {
        for runs in rows.values_mut() {
            runs.sort_by_key(|r| r.seed);
        }
    }
    let out = out.unwrap_or(dir);
    fs::create_dir_all(out)?;
    fs::write(out.join("compare.csv"), render_csv(&groups))?;
    fs::write(out.join("traces.csv"), render_traces(&groups))?;
    print!("{}", render_text(&groups));
    println!("tables in {}", out.display());
    Ok(())
}
