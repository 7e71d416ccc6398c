//! CSV and file output helpers: provenance headers, deterministic
//! formatting ('.' decimals, scientific notation, LF line endings).

use std::collections::hash_map::DefaultHasher;
use std::fs::File;
use std::hash::{Hash, Hasher};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::cmds::CliError;

/// Short hash of the configuration, for the provenance comment line.
pub fn config_hash(debug_repr: &str) -> String {
    let mut hasher = DefaultHasher::new();
    debug_repr.hash(&mut hasher);
    format!("{:016x}", hasher.finish())
}

pub struct CsvWriter {
    out: BufWriter<File>,
}

impl CsvWriter {
    /// Opens a CSV file and writes the provenance comment plus the header
    /// row.
    pub fn create(path: &Path, config_repr: &str, header: &str) -> Result<Self, CliError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(
            out,
            "# mcf {} config={}",
            env!("CARGO_PKG_VERSION"),
            config_hash(config_repr)
        )?;
        writeln!(out, "{header}")?;
        Ok(CsvWriter { out })
    }

    pub fn row(&mut self, line: &str) -> Result<(), CliError> {
        writeln!(self.out, "{line}")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.out.flush()?;
        Ok(())
    }
}

/// Formats an optional value in scientific notation, empty when absent.
pub fn opt_sci(v: Option<f64>) -> String {
    v.map(|v| format!("{v:e}")).unwrap_or_default()
}

pub fn write_text(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, content)?;
    Ok(())
}

/// Log-log plot script over the study CSVs, for an external Python with
/// matplotlib.
pub fn plot_script() -> &'static str {
    r##"#!/usr/bin/env python3
"""Log-log plots of the convergence-study CSVs in this directory."""
import csv
import glob
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))
METRICS = [
    ("l2_error", "flow-map L2 error"),
    ("max_nodal_error", "max nodal error"),
    ("defect_norm", "defect M-norm"),
    ("sup_one_minus_delta", "sup |1 - delta_h|"),
    ("sup_normal_error", "sup normal error"),
    ("interp_l2_error", "interpolation L2 error"),
    ("area_error", "final area error"),
]

for metric, label in METRICS:
    fig, ax = plt.subplots()
    plotted = False
    for path in sorted(glob.glob(os.path.join(HERE, "eoc_k*.csv"))):
        with open(path) as f:
            rows = [r for r in csv.DictReader(
                line for line in f if not line.startswith("#"))]
        hs = [float(r["h"]) for r in rows if r.get(metric)]
        vs = [float(r[metric]) for r in rows if r.get(metric)]
        if hs and vs:
            name = os.path.basename(path).replace(".csv", "")
            ax.loglog(hs, vs, "o-", label=name)
            plotted = True
    if not plotted:
        plt.close(fig)
        continue
    ax.set_xlabel("h")
    ax.set_ylabel(label)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.savefig(os.path.join(HERE, f"plot_{metric}.png"), dpi=150)
    plt.close(fig)
    print(f"plot_{metric}.png")
"##
}
