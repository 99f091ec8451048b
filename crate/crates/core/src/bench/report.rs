use super::config::{ExperimentConfig, Method};
use crate::error::{Error, Result};
use plotters::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Metrics of one method at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub interval_expectation_ms: f64,
    pub sigma_t: f64,
    pub sigma_r: f64,
    pub method: Method,
    /// Empty when the sweep point had no ground truth.
    pub ap50: Option<f64>,
    pub ap70: Option<f64>,
    /// Mean center error of IoU-0.5 true positives, meters.
    pub mean_center_err: Option<f64>,
    pub comm_volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub rows: Vec<ResultRow>,
    pub wall_clock_s: f64,
    pub config_hash: String,
}

impl RunReport {
    pub fn row(&self, interval_ms: f64, sigma_t: f64, method: Method) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.interval_expectation_ms == interval_ms && r.sigma_t == sigma_t && r.method == method)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record([
            "interval_expectation_ms",
            "sigma_t",
            "sigma_r",
            "method",
            "ap50",
            "ap70",
            "mean_center_err",
            "comm_volume",
        ])?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

/// Paths written by [`emit_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub csv: PathBuf,
    pub config: PathBuf,
    pub plots: Vec<PathBuf>,
}

/// Writes `results.csv`, `config.json` and AP-versus-interval plots.
pub fn emit_report(report: &RunReport, cfg: &ExperimentConfig, out_dir: &Path) -> Result<ReportFiles> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::from(e).context(format!("creating {}", out_dir.display())))?;
    let csv = out_dir.join("results.csv");
    std::fs::write(&csv, report.to_csv()?).map_err(|e| Error::from(e).context(format!("writing {}", csv.display())))?;
    let config = out_dir.join("config.json");
    let snapshot = serde_json::json!({
        "config_hash": report.config_hash,
        "wall_clock_s": report.wall_clock_s,
        "config": cfg,
    });
    std::fs::write(&config, serde_json::to_vec_pretty(&snapshot)?)
        .map_err(|e| Error::from(e).context(format!("writing {}", config.display())))?;
    let mut plots = Vec::new();
    for (i, level) in cfg.pose_noise.iter().enumerate() {
        for (metric, pick) in [("ap50", 0usize), ("ap70", 1)] {
            let name = if cfg.pose_noise.len() == 1 {
                format!("{metric}_vs_interval.svg")
            } else {
                format!("{metric}_vs_interval_noise{i}.svg")
            };
            let path = out_dir.join(name);
            let series: Vec<(Method, Vec<(f64, f64)>)> = cfg
                .methods
                .iter()
                .map(|&m| {
                    let pts = report
                        .rows
                        .iter()
                        .filter(|r| r.method == m && r.sigma_t == level.sigma_t && r.sigma_r == level.sigma_r_deg)
                        .filter_map(|r| [r.ap50, r.ap70][pick].map(|v| (r.interval_expectation_ms, v)))
                        .collect();
                    (m, pts)
                })
                .collect();
            let title = format!(
                "{} vs interval expectation (sigma {}/{})",
                metric.to_uppercase(),
                level.sigma_t,
                level.sigma_r_deg
            );
            plot_lines(&path, &title, "interval expectation (ms)", metric, &series)?;
            plots.push(path);
        }
    }
    Ok(ReportFiles { csv, config, plots })
}

fn plot_lines(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(Method, Vec<(f64, f64)>)],
) -> Result<()> {
    let plot_err = |e: &dyn std::fmt::Display| Error::Format(format!("plotting {}: {e}", path.display()));
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(&e))?;
    let xs = series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0));
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (x0, x1) = if x0.is_finite() && x1 > x0 { (x0, x1) } else { (0.0, 1.0) };
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(x0..x1, 0.0..1.0)
        .map_err(|e| plot_err(&e))?;
    chart.configure_mesh().x_desc(x_label).y_desc(y_label).draw().map_err(|e| plot_err(&e))?;
    for (i, (method, pts)) in series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
            .map_err(|e| plot_err(&e))?
            .label(method.name())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_err(&e))?;
    root.present().map_err(|e| plot_err(&e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(interval: f64, method: Method) -> ResultRow {
        ResultRow {
            interval_expectation_ms: interval,
            sigma_t: 0.0,
            sigma_r: 0.0,
            method,
            ap50: Some(0.5),
            ap70: None,
            mean_center_err: Some(0.25),
            comm_volume: 11.0,
        }
    }

    #[test]
    fn empty_report_is_header_only() {
        let r = RunReport { rows: vec![], wall_clock_s: 0.0, config_hash: String::new() };
        let text = String::from_utf8(r.to_csv().unwrap()).unwrap();
        assert_eq!(text, "interval_expectation_ms,sigma_t,sigma_r,method,ap50,ap70,mean_center_err,comm_volume\n");
    }

    #[test]
    fn rows_and_files() {
        let rows = [0.0, 100.0, 200.0]
            .into_iter()
            .flat_map(|i| [row(i, Method::NoCompensation), row(i, Method::FeatureWarpMha)])
            .collect();
        let report = RunReport { rows, wall_clock_s: 1.0, config_hash: "h".into() };
        let text = String::from_utf8(report.to_csv().unwrap()).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.contains("100.0,0.0,0.0,feature_warp_mha,0.5,,0.25,11.0"));
        let dir = std::env::temp_dir().join(format!("bevflow-report-{}", std::process::id()));
        let cfg =
            ExperimentConfig { methods: vec![Method::NoCompensation, Method::FeatureWarpMha], ..Default::default() };
        let files = emit_report(&report, &cfg, &dir).unwrap();
        assert_eq!(std::fs::read(&files.csv).unwrap(), report.to_csv().unwrap());
        assert_eq!(files.plots.len(), 2);
        let svg = std::fs::read_to_string(&files.plots[0]).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("feature_warp_mha"));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
