//! CSV reports with a full-precision JSON sidecar. dB quantities are
//! printed with two decimals.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{PipelineError, Result};
use crate::records::write_text;
use crate::suite::SuiteReport;

fn db(v: f64) -> String {
    format!("{v:.2}")
}

fn opt(v: Option<f64>, f: impl Fn(f64) -> String) -> String {
    v.map(f).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => PipelineError::io(path, io),
        other => PipelineError::Validation(format!("{}: {other:?}", path.display())),
    })?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

/// Write every report file into `out_dir` and return their paths.
pub fn write_reports(report: &SuiteReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| PipelineError::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut emit = |name: &str, header: &[&str], rows: Vec<Vec<String>>| -> Result<()> {
        let p = out_dir.join(name);
        write_csv(&p, header, rows)?;
        written.push(p);
        Ok(())
    };

    emit(
        "links.csv",
        &[
            "link_id", "scenario", "seed", "distance_m", "foliage_depth_m", "status", "pl_db", "generator_pl_db",
            "n_paths", "rms_ds_ns", "asa_deg", "asd_deg", "esd_deg", "cscf", "capacity_mean_bps_hz", "error",
        ],
        report
            .links
            .iter()
            .map(|l| {
                let s = &l.spec;
                let mut row = vec![
                    s.link_id.clone(),
                    s.scenario_class.label().into(),
                    s.seed.to_string(),
                    format!("{:.3}", s.distance_m),
                    format!("{:.3}", s.foliage_depth_m),
                ];
                match &l.metrics {
                    Some(m) => row.extend([
                        "ok".into(),
                        db(m.pl_db),
                        opt(m.generator_pl_db, db),
                        m.n_paths.to_string(),
                        format!("{:.3}", m.spreads.rms_ds_s * 1e9),
                        format!("{:.3}", m.spreads.asa_deg),
                        format!("{:.3}", m.spreads.asd_deg),
                        format!("{:.3}", m.spreads.esd_deg),
                        opt(m.cscf, |v| format!("{v:.4}")),
                        format!("{:.3}", m.capacity_mean),
                        String::new(),
                    ]),
                    None => {
                        row.push("failed".into());
                        row.extend(std::iter::repeat(String::new()).take(9));
                        row.push(l.error.clone().unwrap_or_default());
                    }
                }
                row
            })
            .collect(),
    )?;

    emit(
        "pathloss.csv",
        &["scenario", "model", "params", "sigma_db", "rmse_db", "n"],
        report
            .path_loss
            .iter()
            .map(|r| {
                let params: Vec<String> = r.params.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
                vec![
                    r.scenario.clone(),
                    r.model.clone(),
                    params.join(" "),
                    db(r.sigma_db),
                    db(r.rmse_db),
                    r.n.to_string(),
                ]
            })
            .collect(),
    )?;

    emit(
        "spreads.csv",
        &[
            "scenario", "n", "lgDS_mu", "lgDS_sigma", "lgASA_mu", "lgASA_sigma", "lgASD_mu", "lgASD_sigma",
            "lgESD_mu", "lgESD_sigma",
        ],
        report
            .spreads
            .iter()
            .map(|r| {
                let mut row = vec![r.scenario.clone(), r.n.to_string()];
                for v in [
                    r.ds_mu, r.ds_sigma, r.asa_mu, r.asa_sigma, r.asd_mu, r.asd_sigma, r.esd_mu, r.esd_sigma,
                ] {
                    row.push(db(v));
                }
                row
            })
            .collect(),
    )?;

    emit(
        "chd.csv",
        &["scenario", "n_rx", "chd", "chd_db"],
        report
            .chd
            .iter()
            .map(|r| {
                vec![
                    r.scenario.clone(),
                    r.n_rx.to_string(),
                    format!("{:.6e}", r.chd),
                    db(10.0 * r.chd.log10()),
                ]
            })
            .collect(),
    )?;

    emit(
        "capacity.csv",
        &["scenario", "snr_db", "n", "mean_bps_hz", "std_bps_hz", "selected", "bic_normal", "bic_gmm2"],
        report
            .capacity
            .iter()
            .map(|r| {
                vec![
                    r.scenario.clone(),
                    db(r.snr_db),
                    r.n.to_string(),
                    format!("{:.3}", r.mean),
                    format!("{:.3}", r.std),
                    format!("{:?}", r.selected).to_uppercase(),
                    format!("{:.3}", r.normal.bic),
                    opt(r.gmm2.as_ref().map(|g| g.bic), |v| format!("{v:.3}")),
                ]
            })
            .collect(),
    )?;

    emit(
        "capacity_cdf.csv",
        &["scenario", "capacity_bps_hz", "cdf"],
        report
            .capacity_cdf
            .iter()
            .map(|r| vec![r.scenario.clone(), format!("{:.4}", r.capacity), format!("{:.6}", r.cdf)])
            .collect(),
    )?;

    emit(
        "checks.csv",
        &["check", "expected", "observed", "tolerance", "pass"],
        report
            .checks
            .iter()
            .map(|c| {
                vec![
                    c.name.clone(),
                    format!("{:.4}", c.expected),
                    format!("{:.4}", c.observed),
                    format!("{:.4}", c.tolerance),
                    c.pass.to_string(),
                ]
            })
            .collect(),
    )?;

    let json = out_dir.join("report.json");
    write_text(&json, &serde_json::to_string_pretty(report)?)?;
    written.push(json);

    let log = out_dir.join("run.log");
    write_text(&log, &run_log(report))?;
    written.push(log);
    Ok(written)
}

fn run_log(r: &SuiteReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "umimo {} ({})", r.tool_version, r.source);
    let _ = writeln!(s, "seed {}", r.seed);
    let ok = r.links.iter().filter(|l| l.metrics.is_some()).count();
    let _ = writeln!(s, "links {} ok {} failed {}", r.links.len(), ok, r.links.len() - ok);
    for l in &r.links {
        let _ = writeln!(s, "link {} seed {}", l.spec.link_id, l.spec.seed);
    }
    for w in &r.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    for f in &r.failures {
        let _ = writeln!(s, "failure: {}: {}", f.item, f.error);
    }
    s
}
