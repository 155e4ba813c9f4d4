//! Sigmoid feedforward surrogate for the simulated objective.
//!
//! The surrogate maps a family's free coordinates to an objective estimate.
//! Every layer, the scalar output included, uses the logistic activation;
//! inputs are standardized per coordinate and targets are rescaled into
//! `[0.3, 0.7]` so the output sigmoid works on its near-linear range. The
//! trained network therefore carries its preprocessing with it: evaluation
//! standardizes, runs the layers, and maps the output sigmoid back to
//! objective units through a fixed affine transform.
//!
//! Training is plain minibatch RMSProp on squared error with optional
//! inverted dropout. All randomness (initialization, epoch shuffles,
//! dropout masks) is drawn from named ChaCha streams, so training is
//! reproducible bit for bit.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Architecture and regularization of a surrogate network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    /// Hidden layer widths, input to output. Empty means a single sigmoid
    /// unit on the standardized inputs.
    pub hidden: Vec<usize>,
    /// Probability of dropping a hidden activation during training
    /// (inverted dropout; 0 disables).
    #[serde(default)]
    pub dropout: f64,
}

impl NetworkSpec {
    /// A plain (dropout-free) architecture.
    pub fn new(hidden: Vec<usize>) -> NetworkSpec {
        NetworkSpec { hidden, dropout: 0.0 }
    }

    fn validate(&self) -> Result<()> {
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::config("hidden layer widths must be positive"));
        }
        if !self.dropout.is_finite() || !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// RMSProp training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Learning rate.
    pub learning_rate: f64,
    /// Decay of the squared-gradient accumulator.
    pub rho: f64,
    /// Stabilizer inside the adaptive denominator.
    pub delta: f64,
    /// Minibatch size (the trailing partial batch is used too).
    pub batch: usize,
    /// Full passes over the training set.
    pub epochs: usize,
    /// Stream seed for initialization, shuffling, and dropout.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            learning_rate: 1e-3,
            rho: 0.9,
            delta: 1e-8,
            batch: 128,
            epochs: 1000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::config("rho must lie in [0, 1)"));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::config("delta must be positive"));
        }
        if self.batch == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        Ok(())
    }
}

/// A supervised set of (free coordinates, objective value) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    x: Vec<f64>, // row-major, len = n * dim
    y: Vec<f64>,
}

impl Dataset {
    /// An empty dataset over `dim`-dimensional inputs.
    pub fn new(dim: usize) -> Dataset {
        Dataset { dim, x: Vec::new(), y: Vec::new() }
    }

    /// Input dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of rows.
    pub fn len(&self) -> usize {
        self.y.len()
    }

    /// Whether the dataset holds no rows.
    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Append one row.
    pub fn push(&mut self, x: &[f64], y: f64) {
        assert_eq!(x.len(), self.dim, "row dimension mismatch");
        self.x.extend_from_slice(x);
        self.y.push(y);
    }

    /// The `i`-th input row.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    /// The `i`-th target.
    pub fn target(&self, i: usize) -> f64 {
        self.y[i]
    }

    /// All targets.
    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    /// A dataset holding the selected rows, in order.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        let mut out = Dataset::new(self.dim);
        for &r in rows {
            out.push(self.row(r), self.y[r]);
        }
        out
    }

    /// Index of the best (largest-target) row, lowest index on ties.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for i in 0..self.len() {
            match best {
                Some(b) if self.y[i] <= self.y[b] => {}
                _ => best = Some(i),
            }
        }
        best
    }

    /// Serialize as CSV with header `x1,..,xd,y`. Floats are written in
    /// shortest round-trip form, so a parse of the output reproduces the
    /// dataset bit for bit.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for j in 1..=self.dim {
            s.push_str(&format!("x{j},"));
        }
        s.push_str("y\n");
        for i in 0..self.len() {
            for v in self.row(i) {
                s.push_str(&format!("{v},"));
            }
            s.push_str(&format!("{}\n", self.y[i]));
        }
        s
    }

    /// Parse the CSV form produced by [`Dataset::to_csv`].
    pub fn from_csv(text: &str) -> Result<Dataset> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::config("dataset CSV is empty"))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 2 || cols[cols.len() - 1] != "y" {
            return Err(Error::config("dataset CSV header must end in `y`"));
        }
        let dim = cols.len() - 1;
        let mut out = Dataset::new(dim);
        let mut row = vec![0.0; dim];
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 1 {
                return Err(Error::config(format!(
                    "dataset CSV row {}: {} fields, expected {}",
                    lineno + 2,
                    fields.len(),
                    dim + 1
                )));
            }
            for (k, f) in fields.iter().enumerate() {
                let v: f64 = f.parse().map_err(|e| {
                    Error::config(format!("dataset CSV row {}: {e}", lineno + 2))
                })?;
                if k < dim {
                    row[k] = v;
                } else {
                    out.push(&row, v);
                }
            }
        }
        Ok(out)
    }
}

/// Per-coordinate standardization fitted on the training inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    /// Coordinate means.
    pub mean: Vec<f64>,
    /// Coordinate standard deviations (population).
    pub sd: Vec<f64>,
}

impl Standardizer {
    fn fit(data: &Dataset) -> Result<Standardizer> {
        let (n, d) = (data.len(), data.dim());
        let nf = n as f64;
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(data.row(i)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= nf;
        }
        let mut var = vec![0.0; d];
        for i in 0..n {
            for (k, v) in data.row(i).iter().enumerate() {
                let c = v - mean[k];
                var[k] += c * c;
            }
        }
        let mut sd = vec![0.0; d];
        for (k, v) in var.iter().enumerate() {
            sd[k] = (v / nf).sqrt();
            if sd[k] == 0.0 {
                return Err(Error::numerical(format!(
                    "input coordinate {} is constant; standardization is undefined",
                    k + 1
                )));
            }
        }
        Ok(Standardizer { mean, sd })
    }

}

/// The affine map from the output sigmoid back to objective units:
/// `value = a * s + c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputAffine {
    /// Scale.
    pub a: f64,
    /// Offset.
    pub c: f64,
}

impl OutputAffine {
    /// Maps `[lo, hi]` in target space onto `[0.3, 0.7]` in sigmoid space.
    fn from_target_range(lo: f64, hi: f64) -> Result<OutputAffine> {
        let span = hi - lo;
        if !(span.is_finite() && span > 0.0) {
            return Err(Error::numerical(format!(
                "target range [{lo}, {hi}] is degenerate; cannot rescale targets"
            )));
        }
        let a = span / 0.4;
        Ok(OutputAffine { a, c: lo - 0.3 * a })
    }

    fn to_sigmoid(&self, y: f64) -> f64 {
        (y - self.c) / self.a
    }

    fn to_objective(&self, s: f64) -> f64 {
        self.a * s + self.c
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayerJson {
    /// Weight rows (output unit major).
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkJson {
    spec: NetworkSpec,
    standardizer: Standardizer,
    output_affine: OutputAffine,
    layers: Vec<LayerJson>,
}

/// A trained surrogate network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    standardizer: Standardizer,
    affine: OutputAffine,
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Network {
    /// Input dimension.
    pub fn dim(&self) -> usize {
        self.weights[0].ncols()
    }

    /// Architecture.
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// The output rescaling (objective units per sigmoid unit).
    pub fn output_affine(&self) -> &OutputAffine {
        &self.affine
    }

    /// Number of trainable parameters.
    pub fn param_count(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    /// Evaluate the surrogate at one point, in objective units.
    pub fn forward(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim(), "input dimension mismatch");
        let mut a = DVector::from_fn(x.len(), |k, _| {
            (x[k] - self.standardizer.mean[k]) / self.standardizer.sd[k]
        });
        for (w, b) in self.weights.iter().zip(&self.biases) {
            a = (w * a + b).map(sigmoid);
        }
        self.affine.to_objective(a[0])
    }

    /// Exact gradient of [`Network::forward`] with respect to the raw
    /// (unstandardized) input, by reverse-mode accumulation through the
    /// sigmoid layers.
    pub fn input_gradient(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim(), "input dimension mismatch");
        let mut acts = Vec::with_capacity(self.weights.len() + 1);
        let mut a = DVector::from_fn(x.len(), |k, _| {
            (x[k] - self.standardizer.mean[k]) / self.standardizer.sd[k]
        });
        acts.push(a.clone());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            a = (w * a + b).map(sigmoid);
            acts.push(a.clone());
        }
        // d value / d s_out = a; walk back through sigma'(z) = s (1 - s).
        let s_out = acts.last().unwrap()[0];
        let mut delta = DVector::from_element(1, self.affine.a * s_out * (1.0 - s_out));
        for l in (0..self.weights.len()).rev() {
            let upstream = self.weights[l].transpose() * &delta;
            if l == 0 {
                let mut grad = vec![0.0; x.len()];
                for k in 0..x.len() {
                    grad[k] = upstream[k] / self.standardizer.sd[k];
                }
                return grad;
            }
            let s = &acts[l];
            delta = DVector::from_fn(upstream.nrows(), |k, _| {
                upstream[k] * s[k] * (1.0 - s[k])
            });
        }
        unreachable!("networks always have at least one layer");
    }

    /// Mean squared error on a dataset, in objective units.
    pub fn mse(&self, data: &Dataset) -> f64 {
        assert_eq!(data.dim(), self.dim(), "dataset dimension mismatch");
        let mut acc = 0.0;
        for i in 0..data.len() {
            let e = self.forward(data.row(i)) - data.target(i);
            acc += e * e;
        }
        acc / data.len() as f64
    }

    /// Canonical JSON form; floats are shortest round-trip, so
    /// parse(serialize(net)) reproduces the network bit for bit.
    pub fn to_json(&self) -> String {
        let layers = self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| LayerJson {
                w: (0..w.nrows())
                    .map(|r| (0..w.ncols()).map(|c| w[(r, c)]).collect())
                    .collect(),
                b: b.iter().copied().collect(),
            })
            .collect();
        let json = NetworkJson {
            spec: self.spec.clone(),
            standardizer: self.standardizer.clone(),
            output_affine: self.affine.clone(),
            layers,
        };
        serde_json::to_string_pretty(&json).expect("network serialization cannot fail")
    }

    /// Parse the form produced by [`Network::to_json`].
    pub fn from_json(text: &str) -> Result<Network> {
        let json: NetworkJson =
            serde_json::from_str(text).map_err(|e| Error::json("<network json>", e))?;
        json.spec.validate()?;
        let mut weights = Vec::with_capacity(json.layers.len());
        let mut biases = Vec::with_capacity(json.layers.len());
        for layer in &json.layers {
            let rows = layer.w.len();
            if rows == 0 || rows != layer.b.len() {
                return Err(Error::config("network layer shape mismatch"));
            }
            let cols = layer.w[0].len();
            if layer.w.iter().any(|r| r.len() != cols) {
                return Err(Error::config("network layer has ragged weight rows"));
            }
            weights.push(DMatrix::from_fn(rows, cols, |r, c| layer.w[r][c]));
            biases.push(DVector::from_column_slice(&layer.b));
        }
        if weights.is_empty() || weights.last().unwrap().nrows() != 1 {
            return Err(Error::config("network must end in a single output unit"));
        }
        let net = Network {
            spec: json.spec,
            standardizer: json.standardizer,
            affine: json.output_affine,
            weights,
            biases,
        };
        if net.standardizer.mean.len() != net.dim() || net.standardizer.sd.len() != net.dim() {
            return Err(Error::config("standardizer dimension mismatch"));
        }
        Ok(net)
    }

    /// Hex digest of the canonical JSON form.
    pub fn digest(&self) -> String {
        crate::pipeline::digest_str(&self.to_json())
    }
}

/// Per-layer RMSProp accumulators.
struct RmsState {
    w: Vec<DMatrix<f64>>,
    b: Vec<DVector<f64>>,
}

/// Train a network on the whole dataset.
///
/// The standardizer is fitted on the inputs (a constant coordinate is a
/// numerical error) and the target range is mapped onto `[0.3, 0.7]` (a
/// degenerate range is a numerical error). Initial weights are uniform
/// Glorot draws from stream `(seed, 0)`; epoch `e` draws its shuffle and
/// dropout masks from stream `(seed, 1 + e)`.
pub fn train(data: &Dataset, spec: &NetworkSpec, cfg: &TrainConfig) -> Result<Network> {
    spec.validate()?;
    cfg.validate()?;
    if data.len() < 2 {
        return Err(Error::config("training needs at least two rows"));
    }
    let d = data.dim();
    let standardizer = Standardizer::fit(data)?;
    let (lo, hi) = data
        .targets()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| {
            (lo.min(y), hi.max(y))
        });
    let affine = OutputAffine::from_target_range(lo, hi)?;

    // Layer dimensions input to output; the output layer is width 1.
    let mut dims = vec![d];
    dims.extend_from_slice(&spec.hidden);
    dims.push(1);

    // Glorot-uniform initialization in a fixed (row-major) draw order.
    let mut init_rng = stream_rng(cfg.seed, 0);
    let mut weights = Vec::with_capacity(dims.len() - 1);
    let mut biases = Vec::with_capacity(dims.len() - 1);
    for l in 0..dims.len() - 1 {
        let (fan_in, fan_out) = (dims[l], dims[l + 1]);
        let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let draws: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| init_rng.random_range(-s..s))
            .collect();
        weights.push(DMatrix::from_row_slice(fan_out, fan_in, &draws));
        biases.push(DVector::zeros(fan_out));
    }

    // Standardized inputs as columns, targets in sigmoid space.
    let n = data.len();
    let xstd = DMatrix::from_fn(d, n, |r, c| {
        (data.row(c)[r] - standardizer.mean[r]) / standardizer.sd[r]
    });
    let ts = DVector::from_fn(n, |i, _| affine.to_sigmoid(data.target(i)));

    let mut rms = RmsState {
        w: weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
        b: biases.iter().map(|b| DVector::zeros(b.nrows())).collect(),
    };

    let n_layers = weights.len();
    let keep = 1.0 - spec.dropout;
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = stream_rng(cfg.seed, 1 + epoch as u64);
        order.shuffle(&mut rng);
        let mut start = 0;
        while start < n {
            let b = cfg.batch.min(n - start);
            let idx = &order[start..start + b];
            let x = xstd.select_columns(idx.iter());
            let t = DVector::from_fn(b, |i, _| ts[idx[i]]);

            // Forward pass keeping pre-dropout activations and the masked
            // versions actually fed onward.
            let mut acts: Vec<DMatrix<f64>> = Vec::with_capacity(n_layers + 1);
            let mut fed: Vec<DMatrix<f64>> = Vec::with_capacity(n_layers + 1);
            acts.push(x.clone());
            fed.push(x);
            let mut masks: Vec<Option<DMatrix<f64>>> = Vec::with_capacity(n_layers);
            for l in 0..n_layers {
                let mut z = &weights[l] * &fed[l];
                for mut col in z.column_iter_mut() {
                    col += &biases[l];
                }
                let a = z.map(sigmoid);
                let is_hidden = l + 1 < dims.len() - 1;
                if is_hidden && spec.dropout > 0.0 {
                    let mask = DMatrix::from_fn(a.nrows(), a.ncols(), |_, _| {
                        if rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    });
                    fed.push(a.component_mul(&mask));
                    masks.push(Some(mask));
                } else {
                    fed.push(a.clone());
                    masks.push(None);
                }
                acts.push(a);
            }

            // Backward pass: delta[l] = dLoss/dZ_l with mean-squared loss.
            let bf = b as f64;
            let out = &acts[n_layers];
            let mut delta = DMatrix::from_fn(1, b, |_, c| {
                let s = out[(0, c)];
                2.0 * (s - t[c]) / bf * s * (1.0 - s)
            });
            for l in (0..n_layers).rev() {
                let gw = &delta * fed[l].transpose();
                let gb = DVector::from_fn(delta.nrows(), |r, _| delta.row(r).sum());
                if l > 0 {
                    let mut upstream = weights[l].transpose() * &delta;
                    if let Some(mask) = &masks[l - 1] {
                        upstream.component_mul_assign(mask);
                    }
                    let s = &acts[l];
                    delta = DMatrix::from_fn(upstream.nrows(), b, |r, c| {
                        upstream[(r, c)] * s[(r, c)] * (1.0 - s[(r, c)])
                    });
                }
                rmsprop_update(
                    weights[l].as_mut_slice(),
                    rms.w[l].as_mut_slice(),
                    gw.as_slice(),
                    cfg,
                );
                rmsprop_update(
                    biases[l].as_mut_slice(),
                    rms.b[l].as_mut_slice(),
                    gb.as_slice(),
                    cfg,
                );
            }
            start += b;
        }
    }

    Ok(Network { spec: spec.clone(), standardizer, affine, weights, biases })
}

fn rmsprop_update(param: &mut [f64], r: &mut [f64], g: &[f64], cfg: &TrainConfig) {
    for k in 0..param.len() {
        r[k] = cfg.rho * r[k] + (1.0 - cfg.rho) * g[k] * g[k];
        param[k] -= cfg.learning_rate * g[k] / (r[k] + cfg.delta).sqrt();
    }
}

/// One candidate's cross-validation outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvRow {
    /// The architecture evaluated.
    pub spec: NetworkSpec,
    /// Held-out MSE per fold, in objective units.
    pub fold_mse: Vec<f64>,
    /// Mean of `fold_mse`.
    pub mean_mse: f64,
    /// Trainable parameter count.
    pub params: usize,
}

/// Outcome of structure selection by k-fold cross-validation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvReport {
    /// One row per candidate, in input order.
    pub rows: Vec<CvRow>,
    /// Index of the selected candidate (lowest mean MSE; ties go to the
    /// fewer-parameter architecture).
    pub best: usize,
}

impl CvReport {
    /// The selected architecture.
    pub fn best_spec(&self) -> &NetworkSpec {
        &self.rows[self.best].spec
    }
}

/// Select a network structure by k-fold cross-validation.
///
/// Rows are shuffled once with stream `(seed, u64::MAX)` and split into `k`
/// contiguous folds; every candidate trains `k` times with the same
/// [`TrainConfig`]. The candidate with the lowest mean held-out MSE wins;
/// exact ties go to the architecture with fewer parameters.
pub fn cross_validate(
    data: &Dataset,
    specs: &[NetworkSpec],
    cfg: &TrainConfig,
    k: usize,
) -> Result<CvReport> {
    if specs.is_empty() {
        return Err(Error::config("cross-validation needs at least one candidate"));
    }
    if k < 2 || k > data.len() {
        return Err(Error::config(format!(
            "cross-validation folds {k} must lie in [2, {}]",
            data.len()
        )));
    }
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(cfg.seed, u64::MAX));

    let mut rows = Vec::with_capacity(specs.len());
    for spec in specs {
        let mut fold_mse = Vec::with_capacity(k);
        for f in 0..k {
            let (lo, hi) = (f * n / k, (f + 1) * n / k);
            let val_idx = &order[lo..hi];
            let train_idx: Vec<usize> = order[..lo]
                .iter()
                .chain(&order[hi..])
                .copied()
                .collect();
            let net = train(&data.select(&train_idx), spec, cfg)?;
            fold_mse.push(net.mse(&data.select(val_idx)));
        }
        let mean_mse = fold_mse.iter().sum::<f64>() / k as f64;
        let params = param_count_for(data.dim(), spec);
        rows.push(CvRow { spec: spec.clone(), fold_mse, mean_mse, params });
    }

    let mut best = 0;
    for i in 1..rows.len() {
        let (a, b) = (&rows[i], &rows[best]);
        if a.mean_mse < b.mean_mse || (a.mean_mse == b.mean_mse && a.params < b.params) {
            best = i;
        }
    }
    Ok(CvReport { rows, best })
}

fn param_count_for(dim: usize, spec: &NetworkSpec) -> usize {
    let mut dims = vec![dim];
    dims.extend_from_slice(&spec.hidden);
    dims.push(1);
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}
