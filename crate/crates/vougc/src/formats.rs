//! File formats: the VOU model document, and run manifests for reproducible
//! invocations.
//!
//! Model document grammar: `[model]` with `n = <dim>`, then `[A]` and
//! `[Sigma]` each holding n whitespace-separated rows of n numbers. `#`
//! starts a comment; UTF-8. Numbers are written back with Rust's shortest
//! round-trip formatting, so dump -> parse reproduces every entry bitwise.

use crate::gc::VouModel;
use crate::{Error, Result};
use nalgebra::DMatrix;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        col: 1,
        msg: msg.into(),
    }
}

/// Parse a model document into a validated VOU model.
pub fn parse_vou_model(text: &str) -> Result<VouModel> {
    #[derive(PartialEq, Clone, Copy)]
    enum Section {
        None,
        Model,
        A,
        Sigma,
    }
    let mut section = Section::None;
    let mut n: Option<usize> = None;
    let mut a_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut s_rows: Vec<(usize, Vec<f64>)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let no = idx + 1;
        let content = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let line = content.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            section = match line {
                "[model]" => Section::Model,
                "[A]" => Section::A,
                "[Sigma]" => Section::Sigma,
                other => return Err(perr(no, format!("unknown section `{other}`"))),
            };
            continue;
        }
        match section {
            Section::None => return Err(perr(no, "content before any section header")),
            Section::Model => {
                let (key, val) = line
                    .split_once('=')
                    .ok_or_else(|| perr(no, "expected `n = <dim>`"))?;
                if key.trim() != "n" {
                    return Err(perr(no, format!("unknown [model] key `{}`", key.trim())));
                }
                n = Some(
                    val.trim()
                        .parse()
                        .map_err(|_| perr(no, format!("invalid dimension `{}`", val.trim())))?,
                );
            }
            Section::A | Section::Sigma => {
                let mut row = Vec::new();
                for tok in line.split_whitespace() {
                    row.push(
                        tok.parse()
                            .map_err(|_| perr(no, format!("invalid number `{tok}`")))?,
                    );
                }
                if section == Section::A {
                    a_rows.push((no, row));
                } else {
                    s_rows.push((no, row));
                }
            }
        }
    }

    let n = n.ok_or_else(|| perr(1, "missing [model] section with `n = <dim>`"))?;
    let a = rows_to_matrix(n, &a_rows, "A")?;
    let sigma = rows_to_matrix(n, &s_rows, "Sigma")?;
    VouModel::new(a, sigma)
}

fn rows_to_matrix(n: usize, rows: &[(usize, Vec<f64>)], what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n {
        let line = rows.last().map(|(no, _)| *no).unwrap_or(1);
        return Err(perr(
            line,
            format!("[{what}] has {} rows, expected {n}", rows.len()),
        ));
    }
    let mut m = DMatrix::zeros(n, n);
    for (r, (no, row)) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(perr(
                *no,
                format!("[{what}] row has {} entries, expected {n}", row.len()),
            ));
        }
        for (c, v) in row.iter().enumerate() {
            m[(r, c)] = *v;
        }
    }
    Ok(m)
}

/// Serialize a model so that re-parsing reproduces it bitwise.
pub fn dump_vou_model(model: &VouModel) -> String {
    let n = model.dim();
    let mut out = String::new();
    let _ = writeln!(out, "[model]");
    let _ = writeln!(out, "n = {n}");
    for (name, m) in [("A", model.drift()), ("Sigma", model.sigma())] {
        let _ = writeln!(out, "[{name}]");
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| format!("{}", m[(i, j)])).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    }
    out
}

/// SHA-256 digest of input bytes as lowercase hex.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Provenance record emitted alongside every CLI output. Re-running the
/// recorded command reproduces deterministic outputs bitwise and seeded
/// stochastic outputs exactly (same RNG algorithm and seed).
#[derive(Debug, Clone, Default)]
pub struct RunManifest {
    pub command_line: String,
    /// (label, sha256 hex) per input document.
    pub input_digests: Vec<(String, String)>,
    pub seed: Option<u64>,
    pub version: String,
    pub elapsed_ms: f64,
    /// e.g. "rk4 substeps=10".
    pub integrator: Option<String>,
    /// RNG algorithm name, when randomness is involved.
    pub rng: Option<String>,
}

impl RunManifest {
    pub fn new(command_line: String) -> Self {
        RunManifest {
            command_line,
            version: env!("CARGO_PKG_VERSION").to_string(),
            ..Default::default()
        }
    }

    pub fn record_input(&mut self, label: &str, bytes: &[u8]) {
        self.input_digests
            .push((label.to_string(), sha256_hex(bytes)));
    }

    /// Comment-prefixed text block, safe to append to data streams.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# manifest");
        let _ = writeln!(out, "# command: {}", self.command_line);
        let _ = writeln!(out, "# version: {}", self.version);
        for (label, hex) in &self.input_digests {
            let _ = writeln!(out, "# input {label} sha256: {hex}");
        }
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "# seed: {seed}");
        }
        if let Some(rng) = &self.rng {
            let _ = writeln!(out, "# rng: {rng}");
        }
        if let Some(integrator) = &self.integrator {
            let _ = writeln!(out, "# integrator: {integrator}");
        }
        let _ = writeln!(out, "# elapsed_ms: {:.3}", self.elapsed_ms);
        out
    }
}
