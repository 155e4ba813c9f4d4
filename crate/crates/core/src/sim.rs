//! Trial scenarios and Monte Carlo p-value panels.
//!
//! A scenario fixes the joint distribution of the one-sided test statistics:
//! marginal mean shifts (given directly or derived from target marginal
//! powers at the one-sided level), a correlation matrix (full, or the
//! `exchangeable:rho` shorthand), and the familywise level. Panels of
//! p-values are drawn as `p = Phi(-Z)` with `Z ~ MVN(means, correlation)`
//! via a pivot-free Cholesky factor; `Phi(-z)` equals the one-sided
//! `1 - Phi(z)` exactly and keeps small p-values accurate.
//!
//! Generation is block-splittable: rows are produced in fixed blocks of
//! [`BLOCK_ROWS`], block `k` drawing from ChaCha stream `(seed, k)`, so the
//! panel is bit-identical no matter how many worker threads participate.

use std::fs;
use std::io::{Read as _, Write as _};
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::{cdf, quantile};
use crate::rng::stream_rng;

/// Rows per generation block; the unit of splittable seeding.
pub const BLOCK_ROWS: usize = 8192;

/// Magic header identifying panel binary files.
pub const PANEL_MAGIC: &[u8; 8] = b"MTPPNL01";

/// Tolerance used by the semidefinite Cholesky and the symmetry checks.
const PSD_TOL: f64 = 1e-9;

/// Correlation structure: exchangeable shorthand or a full matrix.
///
/// Serialized either as the string `"exchangeable:<rho>"` or as nested rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Correlation {
    /// Constant off-diagonal correlation, e.g. `"exchangeable:0.5"`.
    #[serde(
        serialize_with = "ser_exchangeable",
        deserialize_with = "de_exchangeable"
    )]
    Exchangeable(f64),
    /// Full symmetric correlation matrix, row by row.
    Matrix(Vec<Vec<f64>>),
}

fn ser_exchangeable<S: serde::Serializer>(rho: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format!("exchangeable:{rho}"))
}

fn de_exchangeable<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    let s = String::deserialize(d)?;
    let rest = s
        .strip_prefix("exchangeable:")
        .ok_or_else(|| serde::de::Error::custom("expected \"exchangeable:<rho>\""))?;
    rest.trim()
        .parse::<f64>()
        .map_err(|e| serde::de::Error::custom(format!("bad exchangeable rho: {e}")))
}

impl Correlation {
    /// Materialize the full `m x m` matrix, row-major.
    pub fn to_matrix(&self, m: usize) -> Result<Vec<f64>> {
        match self {
            Correlation::Exchangeable(rho) => {
                let mut a = vec![*rho; m * m];
                for i in 0..m {
                    a[i * m + i] = 1.0;
                }
                Ok(a)
            }
            Correlation::Matrix(rows) => {
                if rows.len() != m || rows.iter().any(|r| r.len() != m) {
                    return Err(Error::config(format!(
                        "correlation matrix is not {m} x {m}"
                    )));
                }
                let mut a = Vec::with_capacity(m * m);
                for row in rows {
                    a.extend_from_slice(row);
                }
                for i in 0..m {
                    if (a[i * m + i] - 1.0).abs() > PSD_TOL {
                        return Err(Error::config(format!(
                            "correlation diagonal entry {i} is {} (must be 1)",
                            a[i * m + i]
                        )));
                    }
                    for j in 0..i {
                        if (a[i * m + j] - a[j * m + i]).abs() > PSD_TOL {
                            return Err(Error::config(format!(
                                "correlation matrix is not symmetric at ({i}, {j})"
                            )));
                        }
                    }
                }
                Ok(a)
            }
        }
    }
}

/// Scenario configuration as written in JSON: exactly one of
/// `marginal_powers` or `means` must be present.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Number of hypotheses.
    pub m: usize,
    /// Target marginal powers at the one-sided level `alpha`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginal_powers: Option<Vec<f64>>,
    /// Mean shifts of the test statistics under the alternative.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub means: Option<Vec<f64>>,
    /// Correlation structure.
    pub correlation: Correlation,
    /// One-sided familywise level.
    pub alpha: f64,
}

/// A validated scenario: mean vector, correlation matrix (with its Cholesky
/// factor), and familywise level.
#[derive(Debug, Clone)]
pub struct Scenario {
    m: usize,
    means: Vec<f64>,
    correlation: Vec<f64>,
    chol: Vec<f64>,
    alpha: f64,
}

impl Scenario {
    /// Validate a configuration and precompute the Cholesky factor.
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Scenario> {
        let m = cfg.m;
        if m == 0 {
            return Err(Error::config("scenario needs at least one hypothesis"));
        }
        if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
            return Err(Error::config(format!(
                "alpha {} outside (0, 1)",
                cfg.alpha
            )));
        }
        let means = match (&cfg.marginal_powers, &cfg.means) {
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "give either marginal_powers or means, not both",
                ))
            }
            (None, None) => {
                return Err(Error::config("one of marginal_powers or means is required"))
            }
            (Some(powers), None) => {
                if powers.len() != m {
                    return Err(Error::config(format!(
                        "{} marginal powers for {} hypotheses",
                        powers.len(),
                        m
                    )));
                }
                powers
                    .iter()
                    .map(|&p| power_to_mean(p, cfg.alpha))
                    .collect::<Result<Vec<f64>>>()?
            }
            (None, Some(means)) => {
                if means.len() != m {
                    return Err(Error::config(format!(
                        "{} means for {} hypotheses",
                        means.len(),
                        m
                    )));
                }
                if means.iter().any(|x| !x.is_finite()) {
                    return Err(Error::config("means contain a non-finite entry"));
                }
                means.clone()
            }
        };
        let correlation = cfg.correlation.to_matrix(m)?;
        let chol = cholesky_psd(&correlation, m)?;
        Ok(Scenario { m, means, correlation, chol, alpha: cfg.alpha })
    }

    /// Build directly from means and a correlation structure.
    pub fn new(means: Vec<f64>, correlation: Correlation, alpha: f64) -> Result<Scenario> {
        let cfg = ScenarioConfig {
            m: means.len(),
            marginal_powers: None,
            means: Some(means),
            correlation,
            alpha,
        };
        Scenario::from_config(&cfg)
    }

    /// Number of hypotheses.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Mean shifts under the alternative.
    pub fn means(&self) -> &[f64] {
        &self.means
    }

    /// Row-major correlation matrix.
    pub fn correlation(&self) -> &[f64] {
        &self.correlation
    }

    /// One-sided familywise level.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Canonical digest over the normalized scenario (means, correlation,
    /// alpha); identical scenarios digest identically however configured.
    pub fn digest(&self) -> String {
        let rows: Vec<&[f64]> = (0..self.m)
            .map(|i| &self.correlation[i * self.m..(i + 1) * self.m])
            .collect();
        let canon = serde_json::json!({
            "m": self.m,
            "means": self.means,
            "correlation": rows,
            "alpha": self.alpha,
        });
        crate::pipeline::digest_str(&canon.to_string())
    }
}

/// Mean shift that gives marginal power `power` for a one-sided level
/// `alpha` test: `quantile(1 - alpha) + quantile(power)`.
pub fn power_to_mean(power: f64, alpha: f64) -> Result<f64> {
    if !(power > 0.0 && power < 1.0) {
        return Err(Error::config(format!("power {power} outside (0, 1)")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config(format!("alpha {alpha} outside (0, 1)")));
    }
    Ok(quantile(1.0 - alpha) + quantile(power))
}

/// Pivot-free Cholesky factorization tolerant of positive semidefinite
/// inputs: a pivot within tolerance of zero produces a zero column (exactly
/// what degenerate correlations need), while a genuinely negative pivot is a
/// hard error naming the failing index.
pub fn cholesky_psd(a: &[f64], m: usize) -> Result<Vec<f64>> {
    debug_assert_eq!(a.len(), m * m);
    let mut l = vec![0.0; m * m];
    for j in 0..m {
        let mut d = a[j * m + j];
        for k in 0..j {
            d -= l[j * m + k] * l[j * m + k];
        }
        if d < -PSD_TOL {
            return Err(Error::numerical(format!(
                "correlation matrix is not positive semidefinite (pivot {j} = {d:.3e})"
            )));
        }
        let pivot = if d <= PSD_TOL { 0.0 } else { d.sqrt() };
        l[j * m + j] = pivot;
        for i in (j + 1)..m {
            let mut s = a[i * m + j];
            for k in 0..j {
                s -= l[i * m + k] * l[j * m + k];
            }
            if pivot > 0.0 {
                l[i * m + j] = s / pivot;
            } else if s.abs() <= PSD_TOL {
                l[i * m + j] = 0.0;
            } else {
                return Err(Error::numerical(format!(
                    "correlation matrix is not positive semidefinite (zero pivot {j} with residual {s:.3e})"
                )));
            }
        }
    }
    Ok(l)
}

/// A panel of simulated one-sided p-values: `n` replicate rows over `m`
/// hypotheses, stored row-major, tagged with its seed and scenario digest.
#[derive(Debug, Clone, PartialEq)]
pub struct PValuePanel {
    n: usize,
    m: usize,
    seed: u64,
    scenario_digest: String,
    values: Vec<f64>,
}

/// Sidecar metadata persisted next to the panel binary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanelMeta {
    /// Number of replicate rows.
    pub n: usize,
    /// Number of hypotheses per row.
    pub m: usize,
    /// Seed the panel was drawn with.
    pub seed: u64,
    /// Digest of the scenario that produced it.
    pub scenario_digest: String,
}

impl PValuePanel {
    /// Replicate count.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Hypothesis count.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Seed used for generation.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Digest of the generating scenario.
    pub fn scenario_digest(&self) -> &str {
        &self.scenario_digest
    }

    /// One replicate row of p-values.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    /// The full row-major value buffer.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Write the panel as `<path>` (8-byte magic then column-major
    /// little-endian doubles) plus a JSON sidecar at `<path>.json`... the
    /// sidecar replaces the binary extension, e.g. `panel.bin`/`panel.json`.
    pub fn save(&self, bin_path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(8 + self.values.len() * 8);
        buf.extend_from_slice(PANEL_MAGIC);
        for j in 0..self.m {
            for i in 0..self.n {
                buf.extend_from_slice(&self.values[i * self.m + j].to_le_bytes());
            }
        }
        let mut f = fs::File::create(bin_path)
            .map_err(|e| Error::io(bin_path.display().to_string(), e))?;
        f.write_all(&buf)
            .map_err(|e| Error::io(bin_path.display().to_string(), e))?;
        let meta = PanelMeta {
            n: self.n,
            m: self.m,
            seed: self.seed,
            scenario_digest: self.scenario_digest.clone(),
        };
        let sidecar = bin_path.with_extension("json");
        let text = serde_json::to_string_pretty(&meta)
            .map_err(|e| Error::json(sidecar.display().to_string(), e))?;
        fs::write(&sidecar, text).map_err(|e| Error::io(sidecar.display().to_string(), e))?;
        Ok(())
    }

    /// Load a panel written by [`PValuePanel::save`], validating the magic
    /// header, dimensions, and value range.
    pub fn load(bin_path: &Path) -> Result<PValuePanel> {
        let sidecar = bin_path.with_extension("json");
        let meta_text = fs::read_to_string(&sidecar)
            .map_err(|e| Error::io(sidecar.display().to_string(), e))?;
        let meta: PanelMeta = serde_json::from_str(&meta_text)
            .map_err(|e| Error::json(sidecar.display().to_string(), e))?;
        let mut f =
            fs::File::open(bin_path).map_err(|e| Error::io(bin_path.display().to_string(), e))?;
        let mut raw = Vec::new();
        f.read_to_end(&mut raw)
            .map_err(|e| Error::io(bin_path.display().to_string(), e))?;
        if raw.len() < 8 || &raw[..8] != PANEL_MAGIC {
            return Err(Error::config(format!(
                "{} is not a p-value panel (bad magic)",
                bin_path.display()
            )));
        }
        let want = meta
            .n
            .checked_mul(meta.m)
            .and_then(|x| x.checked_mul(8))
            .and_then(|x| x.checked_add(8));
        if want != Some(raw.len()) {
            return Err(Error::config(format!(
                "{}: {} bytes inconsistent with sidecar dimensions {} x {}",
                bin_path.display(),
                raw.len(),
                meta.n,
                meta.m
            )));
        }
        let mut values = vec![0.0f64; meta.n * meta.m];
        let mut off = 8;
        for j in 0..meta.m {
            for i in 0..meta.n {
                let bytes: [u8; 8] = raw[off..off + 8].try_into().expect("sized slice");
                let v = f64::from_le_bytes(bytes);
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::config(format!(
                        "{}: p-value out of range at row {i}, column {j}",
                        bin_path.display()
                    )));
                }
                values[i * meta.m + j] = v;
                off += 8;
            }
        }
        Ok(PValuePanel {
            n: meta.n,
            m: meta.m,
            seed: meta.seed,
            scenario_digest: meta.scenario_digest,
            values,
        })
    }
}

/// Draw `n` replicate rows of one-sided p-values for the scenario.
///
/// Deterministic in `(scenario, n, seed)` and independent of the rayon
/// worker count: row block `k` draws from ChaCha stream `(seed, k)`.
pub fn sample_pvalues(scenario: &Scenario, n: usize, seed: u64) -> PValuePanel {
    let m = scenario.m;
    let mut values = vec![0.0f64; n * m];
    values
        .par_chunks_mut(BLOCK_ROWS * m)
        .enumerate()
        .for_each(|(block, chunk)| {
            let mut rng = stream_rng(seed, block as u64);
            let mut eps = vec![0.0f64; m];
            for row in chunk.chunks_mut(m) {
                for e in eps.iter_mut() {
                    *e = StandardNormal.sample(&mut rng);
                }
                for i in 0..m {
                    let mut z = scenario.means[i];
                    for j in 0..=i {
                        z += scenario.chol[i * m + j] * eps[j];
                    }
                    // One-sided p = 1 - Phi(z), computed as Phi(-z) for
                    // accuracy in the small-p tail.
                    row[i] = cdf(-z);
                }
            }
        });
    PValuePanel {
        n,
        m,
        seed,
        scenario_digest: scenario.digest(),
        values,
    }
}
