//! Run archive: one directory per fit holding the posterior summary,
//! convergence and DIC reports, relative-risk table, and trace files.
//!
//! `manifest.json` is written last and doubles as the completion marker:
//! a directory without a readable manifest is an incomplete leftover and
//! may be overwritten, while overwriting a completed archive requires an
//! explicit force flag. A failed run therefore never masquerades as a
//! finished one.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{DicReport, PosteriorSummaryRow, RiskSummary};
use crate::error::{Error, Result};
use crate::io::table::{read_summary_csv, render_table, write_summary_csv};
use crate::mcmc::ChainSet;

/// Archive layout version.
pub const MANIFEST_VERSION: u32 = 1;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_TXT: &str = "summary.txt";
pub const RHAT_FILE: &str = "rhat.csv";
pub const DIC_FILE: &str = "dic.json";
pub const RISK_FILE: &str = "risk.csv";
pub const TRACE_DIR: &str = "traces";

/// Run metadata snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub tier: String,
    pub seed: u64,
    pub n_chains: usize,
    pub n_iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Hash of the adjacency structure, when the fit used a graph.
    pub graph_fingerprint: Option<String>,
    /// Exact configuration the run was started with.
    pub config: BTreeMap<String, String>,
    /// True when any monitored node reported split R-hat >= 1.1.
    pub convergence_warning: bool,
    pub warnings: Vec<String>,
    /// Node label -> trace file path relative to the archive root.
    pub trace_files: BTreeMap<String, String>,
    pub complete: bool,
}

/// A fit's durable outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArchive {
    pub manifest: Manifest,
    pub summary: Vec<PosteriorSummaryRow<f64>>,
    pub rhat: Vec<(String, f64)>,
    pub dic: DicReport<f64>,
    pub risk: Vec<RiskSummary<f64>>,
}

/// Whether `dir` holds a completed archive (readable manifest written).
/// An unreadable manifest still counts: overwriting anything that claims
/// to be a manifest needs force.
pub fn is_completed_archive(dir: &Path) -> bool {
    dir.join(MANIFEST_FILE).exists()
}

fn sanitize_node(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

impl RunArchive {
    /// Writes every report into `dir`, creating it as needed. Trace CSVs
    /// (columns `chain,iteration,value`) are written for `trace_nodes`
    /// when the chain set is given; the manifest records their paths and
    /// lands on disk last.
    pub fn save(
        &mut self,
        dir: &Path,
        traces: Option<(&ChainSet<f64>, &[String])>,
        force: bool,
    ) -> Result<()> {
        if is_completed_archive(dir) {
            if !force {
                return Err(Error::Archive(format!(
                    "{} already holds a completed run; pass --force to overwrite",
                    dir.display()
                )));
            }
            // Drop the completion marker first so an interrupted rewrite
            // cannot leave a stale manifest over fresh files.
            std::fs::remove_file(dir.join(MANIFEST_FILE))?;
        }
        std::fs::create_dir_all(dir)?;
        write_summary_csv(&dir.join(SUMMARY_CSV), &self.summary)?;
        std::fs::write(dir.join(SUMMARY_TXT), render_table(&self.summary))?;
        write_rhat(&dir.join(RHAT_FILE), &self.rhat)?;
        std::fs::write(dir.join(DIC_FILE), serde_json::to_string_pretty(&self.dic)?)?;
        write_risk(&dir.join(RISK_FILE), &self.risk)?;

        self.manifest.trace_files.clear();
        if let Some((chains, nodes)) = traces {
            let trace_dir = dir.join(TRACE_DIR);
            std::fs::create_dir_all(&trace_dir)?;
            for node in nodes {
                let rel = format!("{TRACE_DIR}/{}.csv", sanitize_node(node));
                write_trace(&dir.join(&rel), chains, node)?;
                self.manifest.trace_files.insert(node.clone(), rel);
            }
        }
        self.manifest.version = MANIFEST_VERSION;
        self.manifest.complete = true;
        std::fs::write(
            dir.join(MANIFEST_FILE),
            serde_json::to_string_pretty(&self.manifest)?,
        )?;
        Ok(())
    }

    /// Loads a completed archive.
    pub fn load(dir: &Path) -> Result<RunArchive> {
        let manifest_path = dir.join(MANIFEST_FILE);
        if !manifest_path.exists() {
            return Err(Error::Archive(format!(
                "{} is not a completed run archive (no {MANIFEST_FILE})",
                dir.display()
            )));
        }
        let manifest: Manifest =
            serde_json::from_str(&std::fs::read_to_string(&manifest_path)?)?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::Archive(format!(
                "archive version {} is not supported (expected {MANIFEST_VERSION})",
                manifest.version
            )));
        }
        Ok(RunArchive {
            manifest,
            summary: read_summary_csv(&dir.join(SUMMARY_CSV))?,
            rhat: read_rhat(&dir.join(RHAT_FILE))?,
            dic: serde_json::from_str(&std::fs::read_to_string(dir.join(DIC_FILE))?)?,
            risk: read_risk(&dir.join(RISK_FILE))?,
        })
    }

    /// Absolute path of a node's trace file, if the archive has one.
    pub fn trace_path(&self, dir: &Path, node: &str) -> Option<PathBuf> {
        self.manifest.trace_files.get(node).map(|rel| dir.join(rel))
    }
}

fn write_rhat(path: &Path, rows: &[(String, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["node", "rhat"])?;
    for (node, r) in rows {
        w.write_record([node.as_str(), &r.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn read_rhat(path: &Path) -> Result<Vec<(String, f64)>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let rec = record?;
        let r: f64 = rec
            .get(1)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Data(format!("bad rhat row in {}", path.display())))?;
        rows.push((rec[0].to_string(), r));
    }
    Ok(rows)
}

fn write_risk(path: &Path, rows: &[RiskSummary<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["region", "period", "mean", "q2.5", "median", "q97.5"])?;
    for r in rows {
        w.write_record([
            r.region.as_str(),
            &r.period.map(|p| p.to_string()).unwrap_or_default(),
            &r.mean.to_string(),
            &r.q2_5.to_string(),
            &r.median.to_string(),
            &r.q97_5.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn read_risk(path: &Path) -> Result<Vec<RiskSummary<f64>>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let rec = record?;
        if rec.len() != 6 {
            return Err(Error::Data(format!("bad risk row in {}", path.display())));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("bad risk value '{}'", &rec[i])))
        };
        let period = match rec[1].trim() {
            "" => None,
            p => Some(
                p.parse::<u32>()
                    .map_err(|_| Error::Data(format!("bad risk period '{p}'")))?,
            ),
        };
        rows.push(RiskSummary {
            region: rec[0].to_string(),
            period,
            mean: num(2)?,
            q2_5: num(3)?,
            median: num(4)?,
            q97_5: num(5)?,
        });
    }
    Ok(rows)
}

fn write_trace(path: &Path, chains: &ChainSet<f64>, node: &str) -> Result<()> {
    let draws = chains.node_draws(node)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "chain,iteration,value")?;
    for (c, chain) in draws.iter().enumerate() {
        for (k, v) in chain.iter().enumerate() {
            writeln!(out, "{},{},{v}", c + 1, chains.iteration_of(k))?;
        }
    }
    out.flush()?;
    Ok(())
}
