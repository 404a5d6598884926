//! SVG line plots of sweep CSVs.
//!
//! The first column is the x axis. Rows with a non-`ok` status are skipped.
//! Log-scale plots draw log10(y) on a linear axis and label the ticks with
//! the original values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use plotters::prelude::*;

struct Sweep {
    headers: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read(path: &Path) -> Result<Sweep> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let status = headers.iter().position(|h| h == "status");
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        if let Some(i) = status {
            if record.get(i) != Some("ok") {
                continue;
            }
        }
        let values = record
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != status)
            .map(|(_, v)| v.parse::<f64>().with_context(|| format!("non-numeric value {v:?}")))
            .collect::<Result<Vec<_>>>()?;
        rows.push(values);
    }
    Ok(Sweep { headers, rows })
}

/// Columns drawn when none are requested, keyed by the x column.
fn default_columns(x: &str) -> Option<&'static [&'static str]> {
    match x {
        "B_hz" => Some(&["PEB_exact_m", "PEB_ue_m", "PEB_approx_m"]),
        "Lambda" => Some(&["crb_delay_exact_s2", "crb_delay_firstorder_s2"]),
        "B_tune_hz" => Some(&["PEB_m", "PEB_ue_m"]),
        "P_w" => Some(&["PEB_m"]),
        _ => None,
    }
}

/// Hz columns are shown in MHz.
fn x_axis(name: &str) -> (String, f64) {
    match name.strip_suffix("_hz") {
        Some(stem) => (format!("{stem} (MHz)"), 1e-6),
        None => (name.to_string(), 1.0),
    }
}

pub fn render(input: &Path, columns: &[String], out: Option<&Path>, log_y: bool) -> Result<PathBuf> {
    let sweep = read(input)?;
    let Some(x_name) = sweep.headers.first().cloned() else {
        bail!("{} has no columns", input.display());
    };
    let wanted: Vec<String> = if columns.is_empty() {
        match default_columns(&x_name) {
            Some(c) => c.iter().map(|s| s.to_string()).collect(),
            None => bail!("no default columns for x = {x_name}; pass --y"),
        }
    } else {
        columns.to_vec()
    };
    let index: Vec<usize> = wanted
        .iter()
        .map(|w| {
            sweep.headers.iter().position(|h| h == w).with_context(|| format!("column {w} not in {}", input.display()))
        })
        .collect::<Result<_>>()?;
    if sweep.rows.is_empty() {
        bail!("{} has no successful rows", input.display());
    }

    let (x_label, x_scale) = x_axis(&x_name);
    let log_y = log_y && sweep.rows.iter().all(|r| index.iter().all(|&i| r[i] > 0.0));
    let series: Vec<Vec<(f64, f64)>> = index
        .iter()
        .map(|&i| {
            sweep
                .rows
                .iter()
                .map(|r| (r[0] * x_scale, if log_y { r[i].log10() } else { r[i] }))
                .collect()
        })
        .collect();
    let bounds = |f: fn(&(f64, f64)) -> f64| {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in series.iter().flatten() {
            lo = lo.min(f(p));
            hi = hi.max(f(p));
        }
        let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 * lo.abs().max(1.0) };
        (lo - pad)..(hi + pad)
    };
    let (xr, yr) = (bounds(|p| p.0), bounds(|p| p.1));

    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| input.parent().unwrap_or(Path::new(".")).to_path_buf());
    std::fs::create_dir_all(&dir)?;
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
    let name = if columns.is_empty() { format!("{stem}.svg") } else { format!("{stem}_{}.svg", wanted.join("_")) };
    let path = dir.join(name);

    {
        let root = SVGBackend::new(&path, (800, 520)).into_drawing_area();
        root.fill(&WHITE)?;
        let mut chart = ChartBuilder::on(&root)
            .margin(16)
            .x_label_area_size(40)
            .y_label_area_size(80)
            .caption(stem, ("sans-serif", 20))
            .build_cartesian_2d(xr, yr)?;
        chart
            .configure_mesh()
            .x_desc(x_label)
            .y_desc(if log_y { "value (log scale)" } else { "value" })
            .y_label_formatter(&|v| if log_y { format!("{:.1e}", 10f64.powf(*v)) } else { format!("{v:.3e}") })
            .draw()?;
        for (n, (points, label)) in series.into_iter().zip(&wanted).enumerate() {
            let color = Palette99::pick(n).to_rgba();
            chart
                .draw_series(LineSeries::new(points.clone(), color.stroke_width(2)))?
                .label(label.as_str())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
            chart.draw_series(points.into_iter().map(|p| Circle::new(p, 3, color.filled())))?;
        }
        chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw()?;
        root.present()?;
    }
    Ok(path)
}
