//! Dataset manifest and import of externally measured tensors.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use umimo_core::ScenarioClass;

use crate::error::{PipelineError, Result};
use crate::records::{parse_geometry, write_text};
use crate::tensor_io::read_header;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum Provenance {
    Synthetic { seed: u64 },
    External { note: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkEntry {
    pub link_id: String,
    pub scenario_class: ScenarioClass,
    /// Array references understood by [`parse_geometry`].
    pub tx_geometry: String,
    pub rx_geometry: String,
    pub distance_m: f64,
    pub foliage_depth_m: f64,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    /// Tensor blob, relative to the manifest directory unless absolute.
    pub tensor_blob_ref: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mpc_list_ref: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub links: Vec<LinkEntry>,
    pub provenance: Provenance,
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl LinkEntry {
    fn check_units(&self) -> std::result::Result<(), String> {
        if !(self.carrier_hz > 1e8 && self.carrier_hz < 3e11) {
            return Err(format!("carrier_hz {} is not a carrier frequency in Hz", self.carrier_hz));
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz < self.carrier_hz) {
            return Err(format!("bandwidth_hz {} must be in (0, carrier_hz)", self.bandwidth_hz));
        }
        if !(self.distance_m > 0.0 && self.distance_m < 1e5) {
            return Err(format!("distance_m {} is not a link distance in metres", self.distance_m));
        }
        if !(self.foliage_depth_m >= 0.0 && self.foliage_depth_m <= self.distance_m) {
            return Err(format!(
                "foliage_depth_m {} must lie in [0, distance_m]",
                self.foliage_depth_m
            ));
        }
        Ok(())
    }
}

impl DatasetManifest {
    pub fn empty(provenance: Provenance) -> Self {
        Self {
            format_version: MANIFEST_VERSION,
            links: Vec::new(),
            provenance,
        }
    }

    /// Check ids, units, geometry references and blobs. All problems are
    /// collected and reported together, one per link.
    pub fn validate(&self, base: &Path) -> Result<()> {
        let mut problems = Vec::new();
        if self.format_version != MANIFEST_VERSION {
            problems.push(format!("unsupported manifest version {}", self.format_version));
        }
        let mut seen = BTreeSet::new();
        let mut reference: Option<(String, usize, usize)> = None;
        for l in &self.links {
            if !seen.insert(l.link_id.as_str()) {
                problems.push(format!("duplicate link_id '{}'", l.link_id));
            }
            if let Err(e) = l.check_units() {
                problems.push(format!("link {}: {e}", l.link_id));
            }
            let geoms = parse_geometry(&l.tx_geometry).and_then(|t| Ok((t, parse_geometry(&l.rx_geometry)?)));
            let blob = resolve(base, &l.tensor_blob_ref);
            match read_header(&blob) {
                Err(PipelineError::Io { .. }) => {
                    problems.push(format!("link {}: missing tensor blob {}", l.link_id, blob.display()))
                }
                Err(e) => problems.push(format!("link {}: {}: {e}", l.link_id, blob.display())),
                Ok(h) => {
                    let (_, _, n_rx, n_tx) = h.dims();
                    match &geoms {
                        Ok((t, r)) if t.len() != n_tx || r.len() != n_rx => problems.push(format!(
                            "link {}: tensor has {n_rx}x{n_tx} elements, geometry {}x{}",
                            l.link_id,
                            r.len(),
                            t.len()
                        )),
                        _ => {}
                    }
                    match &reference {
                        None => reference = Some((l.link_id.clone(), n_rx, n_tx)),
                        Some((id, r, t)) if (*r, *t) != (n_rx, n_tx) => problems.push(format!(
                            "link {}: array dims {n_rx}x{n_tx} inconsistent with link {id} ({r}x{t})",
                            l.link_id
                        )),
                        _ => {}
                    }
                }
            }
            if let Err(e) = geoms {
                problems.push(format!("link {}: {e}", l.link_id));
            }
            if let Some(m) = &l.mpc_list_ref {
                let p = resolve(base, m);
                if !p.is_file() {
                    problems.push(format!("link {}: missing MPC list {}", l.link_id, p.display()));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(PipelineError::Validation(problems.join("; ")))
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_text(path, &serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// One row of an import metadata table.
#[derive(Debug, Clone, Deserialize)]
struct MetadataRow {
    link_id: String,
    scenario_class: String,
    tx_geometry: String,
    rx_geometry: String,
    distance_m: f64,
    #[serde(default)]
    foliage_depth_m: f64,
    carrier_hz: f64,
    bandwidth_hz: f64,
    tensor_path: PathBuf,
    #[serde(default)]
    mpc_path: Option<PathBuf>,
}

/// Build a validated manifest from a CSV metadata table whose columns are
/// `link_id, scenario_class, tx_geometry, rx_geometry, distance_m,
/// foliage_depth_m, carrier_hz, bandwidth_hz, tensor_path[, mpc_path]`.
/// Paths are relative to the table's directory.
pub fn import_external(metadata_csv: &Path, note: &str) -> Result<DatasetManifest> {
    let base = metadata_csv.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(metadata_csv)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => PipelineError::Validation(format!(
                "cannot read metadata table {}",
                metadata_csv.display()
            )),
            _ => PipelineError::Csv(e),
        })?;
    let mut links = Vec::new();
    for (i, row) in reader.deserialize::<MetadataRow>().enumerate() {
        let row = row.map_err(|e| PipelineError::Validation(format!("metadata row {}: {e}", i + 1)))?;
        let scenario_class: ScenarioClass = row
            .scenario_class
            .parse()
            .map_err(|e| PipelineError::Validation(format!("link {}: {e}", row.link_id)))?;
        links.push(LinkEntry {
            link_id: row.link_id,
            scenario_class,
            tx_geometry: row.tx_geometry,
            rx_geometry: row.rx_geometry,
            distance_m: row.distance_m,
            foliage_depth_m: row.foliage_depth_m,
            carrier_hz: row.carrier_hz,
            bandwidth_hz: row.bandwidth_hz,
            tensor_blob_ref: resolve(base, &row.tensor_path),
            mpc_list_ref: row.mpc_path.filter(|p| !p.as_os_str().is_empty()).map(|p| resolve(base, &p)),
        });
    }
    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        links,
        provenance: Provenance::External { note: note.to_string() },
    };
    manifest.validate(base)?;
    Ok(manifest)
}
