//! On-disk artifacts: a binary dump for complex fields, CSV tables with
//! bit-exact floats, and a SHA-256 manifest over everything written.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::eigen::EigenSet;
use crate::geometry::{Manifold, PhasePoint};
use crate::grid::{Grid, GridError, RedCurve, SpectralField};
use crate::tracker::{SymmetryEntry, SymmetryKind, Trajectory};

/// Magic prefix of the binary field dump.
pub const GRID_MAGIC: &[u8; 8] = b"TWGRID1\0";

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a field dump: bad magic header")]
    BadMagic,
    #[error("field dump truncated or oversized: expected {expected} bytes, got {got}")]
    BadLength { expected: usize, got: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Floats in text outputs carry 17 significant digits so that parsing
/// them back reproduces the exact bits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

// ---------------------------------------------------------------------
// Binary field dump
// ---------------------------------------------------------------------

/// Serializes a spectral field: magic, `u32` little-endian `N`, then
/// `N^2` `(re, im)` pairs of little-endian `f64` in storage order.
pub fn spectral_to_bytes(field: &SpectralField) -> Vec<u8> {
    let n = field.grid.n();
    let mut out = Vec::with_capacity(8 + 4 + 16 * n * n);
    out.extend_from_slice(GRID_MAGIC);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for c in &field.coeffs {
        out.extend_from_slice(&c.re.to_le_bytes());
        out.extend_from_slice(&c.im.to_le_bytes());
    }
    out
}

pub fn spectral_from_bytes(bytes: &[u8]) -> Result<SpectralField, IoError> {
    if bytes.len() < 12 || &bytes[0..8] != GRID_MAGIC {
        return Err(IoError::BadMagic);
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let grid = Grid::new(n)?;
    let expected = 12 + 16 * n * n;
    if bytes.len() != expected {
        return Err(IoError::BadLength {
            expected,
            got: bytes.len(),
        });
    }
    let mut coeffs = Vec::with_capacity(n * n);
    for chunk in bytes[12..].chunks_exact(16) {
        let re = f64::from_le_bytes(chunk[0..8].try_into().unwrap());
        let im = f64::from_le_bytes(chunk[8..16].try_into().unwrap());
        coeffs.push(Complex64::new(re, im));
    }
    Ok(SpectralField { grid, coeffs })
}

// ---------------------------------------------------------------------
// CSV tables
// ---------------------------------------------------------------------

pub fn energy_csv(series: &[(f64, f64)]) -> String {
    let mut out = String::from("t,energy\n");
    for (t, e) in series {
        let _ = writeln!(out, "{},{}", fmt_float(*t), fmt_float(*e));
    }
    out
}

/// RED curves stacked long-form: one row per `(s, R)`.
pub fn red_csv(curves: &[RedCurve]) -> String {
    let mut out = String::from("s,R,E\n");
    for curve in curves {
        for (r, e) in curve.radii.iter().zip(&curve.values) {
            let _ = writeln!(out, "{},{r},{}", fmt_float(curve.s), fmt_float(*e));
        }
    }
    out
}

pub fn eigensets_csv(sets: &[EigenSet]) -> String {
    let mut out = String::from("nu,j,re_lambda,im_lambda,residual\n");
    for set in sets {
        for (j, p) in set.pairs.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{j},{},{},{}",
                fmt_float(set.nu),
                fmt_float(p.lambda.re),
                fmt_float(p.lambda.im),
                fmt_float(p.residual)
            );
        }
    }
    out
}

pub fn trajectories_csv(trajectories: &[Trajectory]) -> String {
    let mut out = String::from("traj_id,nu,re_lambda,im_lambda,residual\n");
    for traj in trajectories {
        for p in &traj.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                traj.id,
                fmt_float(p.nu),
                fmt_float(p.lambda.re),
                fmt_float(p.lambda.im),
                fmt_float(p.residual)
            );
        }
    }
    out
}

pub fn symmetry_csv(entries: &[SymmetryEntry]) -> String {
    let mut out = String::from("lambda_re,lambda_im,partner_re,partner_im,distance,kind\n");
    for e in entries {
        let kind = match e.kind {
            SymmetryKind::Matched => "matched",
            SymmetryKind::SelfPaired => "self_paired",
            SymmetryKind::Unmatched => "unmatched",
        };
        let (pre, pim) = match e.partner {
            Some(p) => (fmt_float(p.re), fmt_float(p.im)),
            None => (String::from("NaN"), String::from("NaN")),
        };
        let _ = writeln!(
            out,
            "{},{},{pre},{pim},{},{kind}",
            fmt_float(e.lambda.re),
            fmt_float(e.lambda.im),
            fmt_float(e.distance)
        );
    }
    out
}

pub fn manifold_csv(manifold: &Manifold) -> String {
    let mut out = String::from("x1,x2,eta_sheet1,eta_sheet2,covered\n");
    for s in &manifold.samples {
        match s.eta {
            Some((e1, e2)) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},1",
                    fmt_float(s.x1),
                    fmt_float(s.x2),
                    fmt_float(e1),
                    fmt_float(e2)
                );
            }
            None => {
                let _ = writeln!(out, "{},{},NaN,NaN,0", fmt_float(s.x1), fmt_float(s.x2));
            }
        }
    }
    out
}

pub fn flow_csv(path: &[(f64, PhasePoint)]) -> String {
    let mut out = String::from("t,x1,x2,xi1,xi2\n");
    for (t, p) in path {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_float(*t),
            fmt_float(p.x1),
            fmt_float(p.x2),
            fmt_float(p.xi1),
            fmt_float(p.xi2)
        );
    }
    out
}

// ---------------------------------------------------------------------
// Output directory with manifest
// ---------------------------------------------------------------------

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Collects every artifact of a run and ends with `manifest.txt` listing
/// the SHA-256 of each file.
pub struct OutputDir {
    dir: PathBuf,
    entries: Vec<(String, String)>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, IoError> {
        fs::create_dir_all(dir)?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), IoError> {
        let mut file = fs::File::create(self.dir.join(name))?;
        file.write_all(bytes)?;
        self.entries.push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), IoError> {
        self.write_bytes(name, text.as_bytes())
    }

    /// Writes `manifest.txt` ("<sha256>  <name>" per line, sorted by
    /// name) and consumes the directory handle.
    pub fn finish(mut self) -> Result<PathBuf, IoError> {
        self.entries.sort_by(|a, b| a.0.cmp(&b.0));
        let mut text = String::new();
        for (name, hash) in &self.entries {
            let _ = writeln!(text, "{hash}  {name}");
        }
        let path = self.dir.join("manifest.txt");
        fs::write(&path, text)?;
        Ok(path)
    }
}
