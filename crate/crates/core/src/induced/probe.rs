use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{EmbeddingMatrix, NoisyDataset};
use crate::error::{Error, Result};
use crate::zeroshot::ClassProbabilities;

/// Halvings tried before a step is declared stationary.
const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub l2_lambda: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    /// Relative loss change below which descent stops.
    pub tolerance: f64,
    pub seed: u64,
    /// Permit training when some class has no samples.
    pub allow_missing_classes: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            l2_lambda: 1e-4,
            learning_rate: 1.0,
            iterations: 300,
            tolerance: 1e-6,
            seed: 0,
            allow_missing_classes: false,
        }
    }
}

impl ProbeConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.l2_lambda >= 0.0 && self.learning_rate > 0.0 && self.iterations > 0;
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "probe config needs l2_lambda >= 0, learning_rate > 0, iterations >= 1 (got {self:?})"
            )));
        }
        Ok(())
    }
}

/// Multinomial logistic regression on frozen embeddings: `softmax(W x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProbe {
    num_classes: usize,
    dim: usize,
    /// Row-major `K × d`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    /// Objective value at the start and after every accepted step.
    pub loss_trace: Vec<f64>,
}

/// Gradient of the probe objective, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ProbeGradient {
    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.bias)
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl LinearProbe {
    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        Self {
            num_classes,
            dim,
            weights: vec![0.0; num_classes * dim],
            bias: vec![0.0; num_classes],
            loss_trace: Vec::new(),
        }
    }

    pub fn from_parameters(
        num_classes: usize,
        dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if weights.len() != num_classes * dim || bias.len() != num_classes {
            return Err(Error::Dimension(format!(
                "probe parameters do not match {num_classes} classes x {dim} dims"
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Validation("probe parameters must be finite".into()));
        }
        Ok(Self {
            num_classes,
            dim,
            weights,
            bias,
            loss_trace: Vec::new(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    fn logits(&self, x: &[f32], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let w = &self.weights[k * self.dim..(k + 1) * self.dim];
            *o = self.bias[k] + w.iter().zip(x).map(|(w, &v)| w * v as f64).sum::<f64>();
        }
    }

    /// Continues descent from the current parameters for `cfg.iterations`
    /// steps on `rows` of `x` with the matching `labels`.
    pub fn train(
        &mut self,
        x: &EmbeddingMatrix,
        rows: &[usize],
        labels: &[usize],
        cfg: &ProbeConfig,
    ) -> Result<()> {
        cfg.validate()?;
        let batch = Batch::new(x, rows, labels, self.num_classes)?;
        if x.cols() != self.dim {
            return Err(Error::Dimension(format!(
                "probe expects dimension {}, data has {}",
                self.dim,
                x.cols()
            )));
        }
        if rows.is_empty() {
            return Err(Error::Validation("cannot train a probe on zero samples".into()));
        }
        let mut current = self.clone();
        let (mut loss, mut grad) = batch.evaluate(&current, cfg.l2_lambda);
        if self.loss_trace.is_empty() {
            self.loss_trace.push(loss);
        }
        let mut lr = cfg.learning_rate;
        for _ in 0..cfg.iterations {
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                let trial = current.stepped(&grad, lr);
                let (trial_loss, trial_grad) = batch.evaluate(&trial, cfg.l2_lambda);
                if trial_loss <= loss {
                    accepted = Some((trial, trial_loss, trial_grad));
                    break;
                }
                lr *= 0.5;
            }
            let Some((trial, trial_loss, trial_grad)) = accepted else {
                break;
            };
            let rel = (loss - trial_loss) / loss.abs().max(f64::MIN_POSITIVE);
            current = trial;
            loss = trial_loss;
            grad = trial_grad;
            self.loss_trace.push(loss);
            if rel < cfg.tolerance {
                break;
            }
        }
        self.weights = current.weights;
        self.bias = current.bias;
        Ok(())
    }

    fn stepped(&self, g: &ProbeGradient, lr: f64) -> Self {
        Self {
            num_classes: self.num_classes,
            dim: self.dim,
            weights: self
                .weights
                .iter()
                .zip(&g.weights)
                .map(|(w, g)| w - lr * g)
                .collect(),
            bias: self.bias.iter().zip(&g.bias).map(|(b, g)| b - lr * g).collect(),
            loss_trace: Vec::new(),
        }
    }
}

/// Training rows plus aligned labels.
struct Batch<'a> {
    x: &'a EmbeddingMatrix,
    rows: &'a [usize],
    labels: &'a [usize],
}

impl<'a> Batch<'a> {
    fn new(
        x: &'a EmbeddingMatrix,
        rows: &'a [usize],
        labels: &'a [usize],
        num_classes: usize,
    ) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if let Some(&r) = rows.iter().find(|&&r| r >= x.rows()) {
            return Err(Error::Dimension(format!("row index {r} out of range")));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Validation(format!(
                "label {l} out of range for {num_classes} classes"
            )));
        }
        Ok(Self { x, rows, labels })
    }

    /// Mean cross-entropy + `(l2/2)·‖W‖²` and its gradient.
    fn evaluate(&self, p: &LinearProbe, l2: f64) -> (f64, ProbeGradient) {
        let k = p.num_classes;
        let d = p.dim;
        let mut gw = vec![0.0; k * d];
        let mut gb = vec![0.0; k];
        let mut logits = vec![0.0; k];
        let mut total = 0.0;
        for (&r, &y) in self.rows.iter().zip(self.labels) {
            let x = self.x.row(r);
            p.logits(x, &mut logits);
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
            let lse = m + z.ln();
            total += lse - logits[y];
            for c in 0..k {
                let delta = (logits[c] - lse).exp() - if c == y { 1.0 } else { 0.0 };
                gb[c] += delta;
                for (g, &v) in gw[c * d..(c + 1) * d].iter_mut().zip(x) {
                    *g += delta * v as f64;
                }
            }
        }
        let n = self.rows.len() as f64;
        let reg: f64 = p.weights.iter().map(|w| w * w).sum::<f64>() * 0.5 * l2;
        gw.iter_mut()
            .zip(&p.weights)
            .for_each(|(g, w)| *g = *g / n + l2 * w);
        gb.iter_mut().for_each(|g| *g /= n);
        (total / n + reg, ProbeGradient { weights: gw, bias: gb })
    }
}

fn check_classes(ds: &NoisyDataset, cfg: &ProbeConfig) -> Result<()> {
    if cfg.allow_missing_classes {
        return Ok(());
    }
    let counts = ds.noisy_labels().histogram(ds.num_classes());
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Validation(format!(
            "class {k} has no samples; set allow_missing_classes to train anyway"
        )));
    }
    Ok(())
}

/// Fits a probe on every sample of `ds` against its noisy labels, starting
/// from zero parameters.
pub fn fit_probe(ds: &NoisyDataset, cfg: &ProbeConfig) -> Result<LinearProbe> {
    check_classes(ds, cfg)?;
    let rows: Vec<usize> = (0..ds.len()).collect();
    let mut probe = LinearProbe::zeros(ds.num_classes(), ds.dim());
    probe.train(ds.embeddings(), &rows, ds.noisy_labels().as_slice(), cfg)?;
    Ok(probe)
}

fn full_batch<'a>(ds: &'a NoisyDataset, probe: &LinearProbe, rows: &'a [usize]) -> Result<Batch<'a>> {
    if probe.dim != ds.dim() || probe.num_classes != ds.num_classes() {
        return Err(Error::Dimension(format!(
            "probe is {}x{}, dataset is {}x{}",
            probe.num_classes,
            probe.dim,
            ds.num_classes(),
            ds.dim()
        )));
    }
    Batch::new(ds.embeddings(), rows, ds.noisy_labels().as_slice(), ds.num_classes())
}

/// Analytic gradient of the `fit_probe` objective at `probe`'s parameters.
pub fn probe_gradient(
    ds: &NoisyDataset,
    probe: &LinearProbe,
    cfg: &ProbeConfig,
) -> Result<ProbeGradient> {
    let rows: Vec<usize> = (0..ds.len()).collect();
    Ok(full_batch(ds, probe, &rows)?.evaluate(probe, cfg.l2_lambda).1)
}

/// Value of the `fit_probe` objective at `probe`'s parameters.
pub fn probe_objective(ds: &NoisyDataset, probe: &LinearProbe, cfg: &ProbeConfig) -> Result<f64> {
    let rows: Vec<usize> = (0..ds.len()).collect();
    Ok(full_batch(ds, probe, &rows)?.evaluate(probe, cfg.l2_lambda).0)
}

pub fn predict_probe(probe: &LinearProbe, images: &EmbeddingMatrix) -> Result<ClassProbabilities> {
    if images.cols() != probe.dim {
        return Err(Error::Dimension(format!(
            "probe expects dimension {}, images have {}",
            probe.dim,
            images.cols()
        )));
    }
    let k = probe.num_classes;
    let mut data = Vec::with_capacity(images.rows() * k);
    let mut logits = vec![0.0; k];
    for x in images.iter_rows() {
        probe.logits(x, &mut logits);
        data.extend(softmax(&logits));
    }
    ClassProbabilities::new(images.rows(), k, data)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

pub const PROBE_MAGIC: &[u8; 4] = b"PRB1";

/// `"PRB1"`, u64 K, u64 d, then K·d weights and K biases as f64, all
/// little-endian.
pub fn write_probe<W: Write>(probe: &LinearProbe, mut w: W) -> std::io::Result<()> {
    w.write_all(PROBE_MAGIC)?;
    w.write_all(&(probe.num_classes as u64).to_le_bytes())?;
    w.write_all(&(probe.dim as u64).to_le_bytes())?;
    for v in probe.weights.iter().chain(&probe.bias) {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

pub fn read_probe<R: Read>(mut r: R) -> Result<LinearProbe> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::Format(format!("probe read failed: {e}")))?;
    if bytes.len() < 20 || &bytes[..4] != PROBE_MAGIC {
        return Err(Error::Format("not a PRB1 probe file".into()));
    }
    let k = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    let d = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let expected = k
        .checked_mul(d)
        .and_then(|kd| kd.checked_add(k))
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Format("probe header overflows".into()))?;
    if bytes.len() - 20 != expected {
        return Err(Error::Format(format!(
            "probe payload is {} bytes, header implies {expected}",
            bytes.len() - 20
        )));
    }
    let values: Vec<f64> = bytes[20..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let bias = values[k * d..].to_vec();
    let mut weights = values;
    weights.truncate(k * d);
    LinearProbe::from_parameters(k, d, weights, bias)
}

pub fn save_probe(probe: &LinearProbe, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_probe(probe, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn load_probe(path: impl AsRef<Path>) -> Result<LinearProbe> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_probe(BufReader::new(f))
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabelVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(rows: Vec<Vec<f64>>, labels: Vec<usize>, k: usize) -> NoisyDataset {
        NoisyDataset::new(
            EmbeddingMatrix::from_rows(&rows).unwrap(),
            LabelVector::new(labels),
            None,
            k,
            NoisyDataset::default_class_names(k),
        )
        .unwrap()
    }

    #[test]
    fn separable_classes_fit_perfectly() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..200 {
            let c = i % 2;
            let sign = if c == 0 { -1.0 } else { 1.0 };
            // margin of at least 0.2 around x0 = 0
            rows.push(vec![sign * rng.random_range(0.2..1.0), rng.random_range(-1.0..1.0)]);
            labels.push(c);
        }
        // separability oracle: the hyperplane x0 = 0 splits the data
        assert!(rows.iter().zip(&labels).all(|(r, &c)| (r[0] > 0.0) == (c == 1)));
        let ds = dataset(rows, labels, 2);
        let probe = fit_probe(&ds, &ProbeConfig::default()).unwrap();
        let p = predict_probe(&probe, ds.embeddings()).unwrap();
        assert_eq!(p.accuracy(ds.noisy_labels().as_slice()), 1.0);
    }

    #[test]
    fn heavy_ridge_shrinks_to_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> = (0..120)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        // balanced random labels so the bias optimum stays near zero
        let mut labels: Vec<usize> = (0..120).map(|i| i % 3).collect();
        for i in (1..labels.len()).rev() {
            labels.swap(i, rng.random_range(0..=i));
        }
        let ds = dataset(rows, labels, 3);
        let cfg = ProbeConfig {
            l2_lambda: 10.0,
            ..Default::default()
        };
        let probe = fit_probe(&ds, &cfg).unwrap();
        // ridge-dominated optimum: |W| <= |grad of CE at 0| / lambda <= 1/10
        assert!(probe.weights().iter().all(|w| w.abs() < 0.1));
        let p = predict_probe(&probe, ds.embeddings()).unwrap();
        for row in p.iter_rows() {
            assert!(row.iter().all(|v| (v - 1.0 / 3.0).abs() < 0.05), "{row:?}");
        }
    }

    #[test]
    fn missing_class_is_rejected() {
        let ds = dataset(vec![vec![1.0], vec![0.5]], vec![0, 0], 2);
        assert!(fit_probe(&ds, &ProbeConfig::default()).is_err());
        let cfg = ProbeConfig {
            allow_missing_classes: true,
            ..Default::default()
        };
        assert!(fit_probe(&ds, &cfg).is_ok());
    }

    #[test]
    fn loss_trace_is_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let labels = (0..60).map(|_| rng.random_range(0..3)).collect();
        let ds = dataset(rows, labels, 3);
        let cfg = ProbeConfig {
            learning_rate: 50.0,
            ..Default::default()
        };
        let probe = fit_probe(&ds, &cfg).unwrap();
        assert!(probe.loss_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_probe_predicts_uniform() {
        let probe = LinearProbe::zeros(4, 2);
        let x = EmbeddingMatrix::from_rows(&[[1.0, 2.0], [-3.0, 0.5]]).unwrap();
        for row in predict_probe(&probe, &x).unwrap().iter_rows() {
            assert_eq!(row, &[0.25; 4]);
        }
    }

    #[test]
    fn softmax_hand_case_and_shift_invariance() {
        let p = softmax(&[2f64.ln(), 0.0]);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
        let l = [0.3, -1.2, 2.5];
        let shifted: Vec<f64> = l.iter().map(|v| v + 17.0).collect();
        for (a, b) in softmax(&l).iter().zip(softmax(&shifted)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bias_gradient_vanishes_at_symmetric_point() {
        // centred features, balanced labels, zero weights
        let ds = dataset(
            vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]],
            vec![0, 0, 1, 1],
            2,
        );
        let g = probe_gradient(&ds, &LinearProbe::zeros(2, 2), &ProbeConfig::default()).unwrap();
        assert!(g.bias.iter().all(|b| b.abs() < 1e-9));
    }

    #[test]
    fn dimension_mismatch_errors() {
        let probe = LinearProbe::zeros(2, 3);
        let x = EmbeddingMatrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(predict_probe(&probe, &x).is_err());
        let ds = dataset(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0, 1], 2);
        assert!(probe_gradient(&ds, &probe, &ProbeConfig::default()).is_err());
    }

    #[test]
    fn probe_file_round_trips() {
        let p = LinearProbe::from_parameters(2, 3, vec![1.0, -2.5, 0.0, 1e-300, 7.0, -0.0], vec![0.5, -0.5]).unwrap();
        let mut buf = Vec::new();
        write_probe(&p, &mut buf).unwrap();
        assert_eq!(buf.len(), 20 + 8 * 8);
        assert_eq!(read_probe(buf.as_slice()).unwrap(), p);
        buf.pop();
        assert!(matches!(read_probe(buf.as_slice()), Err(Error::Format(_))));
    }
}
