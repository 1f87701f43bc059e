//! CSV writers and the artifact manifest.
//!
//! Numbers are rounded to 12 significant digits and printed in their shortest
//! round-trip form, so repeated runs give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::ctm::Trajectory;
use crate::error::Result;
use crate::network::Network;
use crate::robustness::{BoundCurve, SweepPoint};
use crate::synthesis::ControlSchedule;

/// `v` rounded to 12 significant digits.
pub fn num(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
    // Avoid "-0".
    if rounded == 0.0 {
        "0".into()
    } else {
        format!("{rounded}")
    }
}

pub fn trajectory_csv(net: &Network, traj: &Trajectory) -> String {
    let mut out = String::from("step,cell,x [veh],y [veh/step],z [veh/step],mu [veh/step],gamma [1]\n");
    for (t, x) in traj.x.iter().enumerate() {
        for i in 0..net.len() {
            match traj.rates.get(t) {
                Some(r) => writeln!(
                    out,
                    "{t},{},{},{},{},{},{}",
                    net.id(i),
                    num(x[i]),
                    num(r.y[i]),
                    num(r.z[i]),
                    num(r.mu[i]),
                    num(r.gamma[i])
                ),
                None => writeln!(out, "{t},{},{},,,,", net.id(i), num(x[i])),
            }
            .expect("write to string");
        }
    }
    out
}

/// Volumes `x[t][i]` for the listed cell indices, one column per cell.
pub fn volumes_csv(net: &Network, x: &[Vec<f64>], cells: &[usize]) -> String {
    let mut out = String::from("step");
    for &i in cells {
        write!(out, ",x{} [veh]", net.id(i)).unwrap();
    }
    out.push('\n');
    for (t, row) in x.iter().enumerate() {
        out.push_str(&t.to_string());
        for &i in cells {
            write!(out, ",{}", num(row[i])).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn alpha_csv(net: &Network, controls: &ControlSchedule) -> String {
    let mut out = String::from("step,cell,alpha [1]\n");
    for (t, a) in controls.alpha.iter().enumerate() {
        for (i, v) in a.iter().enumerate() {
            writeln!(out, "{t},{},{}", net.id(i), num(*v)).unwrap();
        }
    }
    out
}

pub fn routing_csv(net: &Network, controls: &ControlSchedule, horizon: usize) -> String {
    let mut out = String::from("step,i,j,R [1]\n");
    for t in 0..horizon {
        for (e, &(i, j)) in net.edges.iter().enumerate() {
            let r = controls.routing.ratio(net, e, t);
            writeln!(out, "{t},{},{},{}", net.id(i), net.id(j), num(r)).unwrap();
        }
    }
    out
}

pub fn bound_csv(curve: &BoundCurve) -> String {
    let mut out = String::from("step,bound [veh],provenance\n");
    for (t, (v, p)) in curve.values.iter().zip(&curve.provenance).enumerate() {
        writeln!(out, "{t},{},{p}", num(*v)).unwrap();
    }
    out
}

/// Sweep summary; `bound` sums the combined bound over all steps.
pub fn sweep_csv(points: &[SweepPoint], model: &str) -> String {
    let mut out = String::from(
        "delta_lambda [veh/step],simulated_cost_perturbation [veh*step],combined_bound [veh*step],\
         sensitivity_bound [veh*step],min_gamma [1],overload,model\n",
    );
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{},{model}",
            num(p.delta),
            num(p.cost_perturbation),
            num(p.combined_sum),
            num(p.sensitivity_sum),
            num(p.min_gamma),
            p.overload
        )
        .unwrap();
    }
    out
}

#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// Collects written files so a manifest can be emitted at the end.
#[derive(Debug)]
pub struct ArtifactWriter {
    root: PathBuf,
    entries: Vec<ManifestEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

impl ArtifactWriter {
    pub fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(ArtifactWriter { root: root.to_path_buf(), entries: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents)?;
        self.entries.retain(|e| e.file != name);
        self.entries.push(ManifestEntry {
            file: name.to_string(),
            bytes: contents.len() as u64,
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(path)
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    /// Writes `manifest.json` (entries sorted by file name) and returns its path.
    pub fn finish(mut self) -> Result<PathBuf> {
        self.entries.sort_by(|a, b| a.file.cmp(&b.file));
        let text = serde_json::to_string_pretty(&self.entries)? + "\n";
        let path = self.root.join(MANIFEST_NAME);
        fs::write(&path, text)?;
        Ok(path)
    }
}
