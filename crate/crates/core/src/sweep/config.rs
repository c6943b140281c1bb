//! Flat `key = value` sweep configuration.
//!
//! ```text
//! # comment
//! alphas = 0, 0.5, 1
//! lambdas = 1, 1.5, 2
//! p_magnitudes = 0, 0.5
//! grid.lambda_max = 2
//! grid.spacing = 0.5
//! n_max = 2
//! variant = local
//! solver.tol = 1e-10
//! solver.max_iter = 5000
//! solver.restart = 300
//! output = energies.csv
//! seed = 7
//! timing = false
//! ```
//!
//! Relative `output` paths are resolved against the config file's
//! directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eigen::{SolverConfig, StartVector};
use crate::error::{Error, Result};
use crate::hamiltonian::Variant;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lambda_max: f64,
    pub spacing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    /// Strictly increasing cutoffs.
    pub lambdas: Vec<f64>,
    /// `|P|`, with `P` along the z axis.
    pub p_magnitudes: Vec<f64>,
    pub grid: GridSpec,
    pub n_max: usize,
    pub variant: Variant,
    pub solver: SolverConfig,
    pub output: PathBuf,
    pub seed: u64,
    /// Record wall-clock times. Off by default so that output files are
    /// byte-reproducible.
    pub timing: bool,
}

const KEYS: [&str; 13] = [
    "alphas",
    "lambdas",
    "p_magnitudes",
    "grid.lambda_max",
    "grid.spacing",
    "n_max",
    "variant",
    "solver.tol",
    "solver.max_iter",
    "solver.restart",
    "output",
    "seed",
    "timing",
];

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("{key}: '{v}' is not a number")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_f64(key, s))
        .collect()
}

fn parse_int<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse::<T>()
        .map_err(|_| Error::Config(format!("{key}: '{v}' is not a nonnegative integer")))
}

impl SweepConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv: BTreeMap<&str, &str> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(Error::Config(format!("line {}: unknown key '{k}'", lineno + 1)));
            }
            if kv.insert(k, v.trim()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{k}'", lineno + 1)));
            }
        }
        let req = |k: &str| kv.get(k).copied().ok_or_else(|| Error::Config(format!("missing key '{k}'")));

        let defaults = SolverConfig::default();
        let seed: u64 = kv.get("seed").map_or(Ok(0), |v| parse_int("seed", v))?;
        let solver = SolverConfig {
            tol: kv.get("solver.tol").map_or(Ok(defaults.tol), |v| parse_f64("solver.tol", v))?,
            max_iter: kv
                .get("solver.max_iter")
                .map_or(Ok(defaults.max_iter), |v| parse_int("solver.max_iter", v))?,
            restart: kv
                .get("solver.restart")
                .map_or(Ok(defaults.restart), |v| parse_int("solver.restart", v))?,
            start: StartVector::PerturbedOnes { seed },
            ..defaults
        };
        let timing = match kv.get("timing").copied() {
            None | Some("false") => false,
            Some("true") => true,
            Some(other) => return Err(Error::Config(format!("timing: '{other}' is not true/false"))),
        };
        let cfg = SweepConfig {
            alphas: parse_list("alphas", req("alphas")?)?,
            lambdas: parse_list("lambdas", req("lambdas")?)?,
            p_magnitudes: parse_list("p_magnitudes", req("p_magnitudes")?)?,
            grid: GridSpec {
                lambda_max: parse_f64("grid.lambda_max", req("grid.lambda_max")?)?,
                spacing: parse_f64("grid.spacing", req("grid.spacing")?)?,
            },
            n_max: parse_int("n_max", req("n_max")?)?,
            variant: kv.get("variant").map_or(Ok(Variant::Local), |v| v.parse())?,
            solver,
            output: PathBuf::from(req("output")?),
            seed,
            timing,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read and parse a config file; a relative `output` is taken relative
    /// to the file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if cfg.output.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.output = dir.join(&cfg.output);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.alphas.is_empty() || self.lambdas.is_empty() || self.p_magnitudes.is_empty() {
            return bad("alphas, lambdas and p_magnitudes must be non-empty".into());
        }
        if self.alphas.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return bad("alphas must be finite and nonnegative".into());
        }
        if self.p_magnitudes.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return bad("p_magnitudes must be finite and nonnegative".into());
        }
        if self.lambdas.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return bad("lambdas must be positive".into());
        }
        if self.lambdas.windows(2).any(|w| w[1] <= w[0]) {
            return bad("lambdas must be strictly increasing".into());
        }
        let g = self.grid;
        if !(g.lambda_max > 0.0 && g.spacing > 0.0 && g.spacing < g.lambda_max) {
            return bad("grid needs 0 < spacing < lambda_max".into());
        }
        if let Some(&top) = self.lambdas.last() {
            if top > g.lambda_max {
                return bad(format!("largest cutoff {top} exceeds grid.lambda_max {}", g.lambda_max));
            }
        }
        if !(self.solver.tol > 0.0) {
            return bad("solver.tol must be positive".into());
        }
        if self.solver.restart < 2 {
            return bad("solver.restart must be at least 2".into());
        }
        Ok(())
    }

    /// Everything that affects a row's numbers except the triple itself.
    /// Rows from runs with the same key are interchangeable.
    pub fn canonical(&self) -> String {
        format!(
            "grid.lambda_max={:?};grid.spacing={:?};n_max={};variant={};solver.tol={:?};solver.max_iter={};solver.restart={};seed={}",
            self.grid.lambda_max,
            self.grid.spacing,
            self.n_max,
            self.variant,
            self.solver.tol,
            self.solver.max_iter,
            self.solver.restart,
            self.seed
        )
    }

    pub fn hash(&self) -> String {
        hex_digest(self.canonical().as_bytes())
    }

    pub fn manifest_path(&self) -> PathBuf {
        let mut s = self.output.clone().into_os_string();
        s.push(".manifest.json");
        PathBuf::from(s)
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
        # weak coupling scan
        alphas = 0, 0.5,1
        lambdas = 1, 1.5, 2
        p_magnitudes = 0
        grid.lambda_max = 2
        grid.spacing = 0.5   # cell side
        n_max = 2
        variant = full
        solver.tol = 1e-9
        output = out.csv
        seed = 42
    ";

    #[test]
    fn parses_sample() {
        let c = SweepConfig::parse(SAMPLE).unwrap();
        assert_eq!(c.alphas, vec![0.0, 0.5, 1.0]);
        assert_eq!(c.variant, Variant::Full);
        assert_eq!(c.solver.tol, 1e-9);
        assert_eq!(c.solver.max_iter, 5000);
        assert_eq!(c.solver.start, StartVector::PerturbedOnes { seed: 42 });
        assert!(!c.timing);
        assert_eq!(c.manifest_path(), PathBuf::from("out.csv.manifest.json"));
    }

    #[test]
    fn rejects_bad_input() {
        for (from, to) in [
            ("lambdas = 1, 1.5, 2", "lambdas = 1, 2, 1.5"),
            ("lambdas = 1, 1.5, 2", "lambdas = 1, 1.5, 3"),
            ("n_max = 2", "n_max = -1"),
            ("seed = 42", "seed = 42\nseed = 1"),
            ("seed = 42", "colour = blue"),
            ("output = out.csv", ""),
            ("variant = full", "variant = sideways"),
        ] {
            let text = SAMPLE.replace(from, to);
            assert!(matches!(SweepConfig::parse(&text), Err(Error::Config(_))), "{to}");
        }
    }

    #[test]
    fn hash_ignores_lists_and_output() {
        let a = SweepConfig::parse(SAMPLE).unwrap();
        let b = SweepConfig::parse(&SAMPLE.replace("alphas = 0, 0.5,1", "alphas = 3").replace("out.csv", "x.csv")).unwrap();
        let c = SweepConfig::parse(&SAMPLE.replace("seed = 42", "seed = 43")).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
