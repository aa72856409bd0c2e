//! Absorb / relabel / drop training over a selected subset.
//!
//! Starting from a probe trained on the selected samples, every epoch looks
//! at each non-selected sample's current prediction `p`, with `p_m = max p`
//! and `y_m = argmax p`:
//!
//! | condition                          | decision | label  |
//! |------------------------------------|----------|--------|
//! | `p_m > theta_r` and `y = y_m`      | absorb   | `y`    |
//! | `p_m > theta_r'` and `y != y_m`    | relabel  | `y_m`  |
//! | otherwise                          | drop     | `y`    |
//!
//! and trains on selected ∪ absorbed ∪ relabeled.

use serde::{Deserialize, Serialize};

use crate::corpus::{EmbeddingMatrix, NoisyDataset};
use crate::error::{Error, Result};
use crate::induced::{predict_probe, LinearProbe, ProbeConfig};
use crate::select::SelectionResult;
use crate::zeroshot::{argmax, ClassProbabilities, ROW_SUM_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Drop,
    Absorb,
    Relabel,
}

/// Where a sample's current training membership comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Selected,
    Absorbed,
    Relabeled,
    Dropped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixFixConfig {
    /// Absorb threshold.
    pub theta_r: f64,
    /// Relabel threshold.
    pub theta_r_prime: f64,
    pub epochs: usize,
    /// Probe settings; `probe.iterations` is the warm-up budget on the selected subset.
    pub probe: ProbeConfig,
    /// Descent steps per epoch on the expanded training set.
    pub epoch_iterations: usize,
    /// Keep earlier absorptions/relabels instead of re-deciding every epoch.
    pub sticky: bool,
    pub seed: u64,
}

impl Default for MixFixConfig {
    fn default() -> Self {
        Self {
            theta_r: 0.7,
            theta_r_prime: 0.8,
            epochs: 100,
            probe: ProbeConfig {
                allow_missing_classes: true,
                ..ProbeConfig::default()
            },
            epoch_iterations: 20,
            sticky: false,
            seed: 0,
        }
    }
}

fn check_thresholds(theta_r: f64, theta_r_prime: f64) -> Result<()> {
    if !(theta_r > 0.0 && theta_r <= theta_r_prime && theta_r_prime <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < theta_r <= theta_r' <= 1, got {theta_r} and {theta_r_prime}"
        )));
    }
    Ok(())
}

impl MixFixConfig {
    pub fn validate(&self) -> Result<()> {
        check_thresholds(self.theta_r, self.theta_r_prime)
    }
}

/// Decision for one non-selected sample. Comparisons are strict, so
/// `p_m == theta` drops; argmax ties go to the lowest class index.
pub fn mixfix_decide(
    p: &[f64],
    label: usize,
    theta_r: f64,
    theta_r_prime: f64,
) -> Result<(Decision, usize)> {
    check_thresholds(theta_r, theta_r_prime)?;
    if p.is_empty()
        || label >= p.len()
        || p.iter().any(|v| !(0.0..=1.0).contains(v))
        || (p.iter().sum::<f64>() - 1.0).abs() > ROW_SUM_TOLERANCE
    {
        return Err(Error::Validation(format!(
            "invalid probability row {p:?} for label {label}"
        )));
    }
    let (y_m, p_m) = argmax(p);
    Ok(if p_m > theta_r && label == y_m {
        (Decision::Absorb, label)
    } else if p_m > theta_r_prime && label != y_m {
        (Decision::Relabel, y_m)
    } else {
        (Decision::Drop, label)
    })
}

/// The model whose predictions drive absorb/relabel decisions.
pub trait Learner {
    fn predict(&self, x: &EmbeddingMatrix) -> Result<ClassProbabilities>;

    fn train(
        &mut self,
        x: &EmbeddingMatrix,
        rows: &[usize],
        labels: &[usize],
        cfg: &ProbeConfig,
    ) -> Result<()>;
}

impl Learner for LinearProbe {
    fn predict(&self, x: &EmbeddingMatrix) -> Result<ClassProbabilities> {
        predict_probe(self, x)
    }

    fn train(
        &mut self,
        x: &EmbeddingMatrix,
        rows: &[usize],
        labels: &[usize],
        cfg: &ProbeConfig,
    ) -> Result<()> {
        LinearProbe::train(self, x, rows, labels, cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub n_train: usize,
    pub n_absorbed: usize,
    pub n_relabeled: usize,
    /// Fraction of training labels equal to the truth, when known.
    pub train_label_acc: Option<f64>,
    pub holdout_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<L = LinearProbe> {
    pub epoch: usize,
    pub model: L,
    /// Current label of every sample: original for selected/absorbed/dropped,
    /// the argmax for relabeled.
    pub labels: Vec<usize>,
    pub origins: Vec<Origin>,
    pub history: Vec<EpochRecord>,
}

impl<L> TrainState<L> {
    pub fn is_active(&self, i: usize) -> bool {
        self.origins[i] != Origin::Dropped
    }

    /// Indices of the current training set, ascending.
    pub fn train_rows(&self) -> Vec<usize> {
        (0..self.origins.len()).filter(|&i| self.is_active(i)).collect()
    }

    pub fn active_mask(&self) -> Vec<bool> {
        (0..self.origins.len()).map(|i| self.is_active(i)).collect()
    }

    pub fn count(&self, origin: Origin) -> usize {
        self.origins.iter().filter(|&&o| o == origin).count()
    }

    /// Fraction of the training set whose current label is wrong.
    pub fn train_noise_ratio(&self, truth: &[usize]) -> f64 {
        let rows = self.train_rows();
        let wrong = rows.iter().filter(|&&i| self.labels[i] != truth[i]).count();
        wrong as f64 / rows.len().max(1) as f64
    }

    fn record(&self, ds: &NoisyDataset) -> EpochRecord {
        EpochRecord {
            epoch: self.epoch,
            n_train: self.train_rows().len(),
            n_absorbed: self.count(Origin::Absorbed),
            n_relabeled: self.count(Origin::Relabeled),
            train_label_acc: ds
                .true_labels()
                .map(|t| 1.0 - self.train_noise_ratio(t.as_slice())),
            holdout_acc: None,
        }
    }
}

fn check_selection(ds: &NoisyDataset, selected: &SelectionResult) -> Result<()> {
    if selected.len() != ds.len() {
        return Err(Error::Dimension(format!(
            "selection covers {} samples, dataset has {}",
            selected.len(),
            ds.len()
        )));
    }
    if selected.count() == 0 {
        return Err(Error::EmptySelection(
            "no samples were selected; nothing to train on".into(),
        ));
    }
    Ok(())
}

impl<L: Learner> TrainState<L> {
    /// Epoch-0 state around an already prepared model: training set equals
    /// the selected subset.
    pub fn with_model(ds: &NoisyDataset, selected: &SelectionResult, model: L) -> Result<Self> {
        check_selection(ds, selected)?;
        let origins = selected
            .mask
            .iter()
            .map(|&m| if m { Origin::Selected } else { Origin::Dropped })
            .collect();
        let mut state = Self {
            epoch: 0,
            model,
            labels: ds.noisy_labels().as_slice().to_vec(),
            origins,
            history: Vec::new(),
        };
        state.history.push(state.record(ds));
        Ok(state)
    }
}

impl TrainState<LinearProbe> {
    /// Zero-initialised probe trained on the selected subset.
    pub fn init(ds: &NoisyDataset, selected: &SelectionResult, cfg: &MixFixConfig) -> Result<Self> {
        cfg.validate()?;
        check_selection(ds, selected)?;
        let rows = selected.selected_indices();
        let labels: Vec<usize> = rows.iter().map(|&i| ds.noisy_labels().get(i)).collect();
        let mut probe = LinearProbe::zeros(ds.num_classes(), ds.dim());
        probe.train(ds.embeddings(), &rows, &labels, &cfg.probe)?;
        Self::with_model(ds, selected, probe)
    }
}

/// One absorb/relabel/drop pass followed by a training pass.
pub fn mixfix_epoch<L: Learner>(
    mut state: TrainState<L>,
    ds: &NoisyDataset,
    selected: &SelectionResult,
    cfg: &MixFixConfig,
) -> Result<TrainState<L>> {
    cfg.validate()?;
    check_selection(ds, selected)?;
    let preds = state.model.predict(ds.embeddings())?;
    let noisy = ds.noisy_labels().as_slice();
    for i in 0..ds.len() {
        if selected.mask[i] {
            state.origins[i] = Origin::Selected;
            state.labels[i] = noisy[i];
            continue;
        }
        if cfg.sticky && matches!(state.origins[i], Origin::Absorbed | Origin::Relabeled) {
            continue;
        }
        let (decision, label) = mixfix_decide(preds.row(i), noisy[i], cfg.theta_r, cfg.theta_r_prime)?;
        state.origins[i] = match decision {
            Decision::Drop => Origin::Dropped,
            Decision::Absorb => Origin::Absorbed,
            Decision::Relabel => Origin::Relabeled,
        };
        state.labels[i] = label;
    }
    let rows = state.train_rows();
    let labels: Vec<usize> = rows.iter().map(|&i| state.labels[i]).collect();
    let step_cfg = ProbeConfig {
        iterations: cfg.epoch_iterations.max(1),
        ..cfg.probe
    };
    if cfg.epoch_iterations > 0 {
        state.model.train(ds.embeddings(), &rows, &labels, &step_cfg)?;
    }
    state.epoch += 1;
    let record = state.record(ds);
    state.history.push(record);
    Ok(state)
}

/// Full loop. When `holdout` is given, per-epoch accuracy against its true
/// labels (or its labels, if no truth is attached) is recorded and its final
/// predictions returned.
pub fn mixfix_run(
    ds: &NoisyDataset,
    selected: &SelectionResult,
    cfg: &MixFixConfig,
    holdout: Option<&NoisyDataset>,
) -> Result<(TrainState, Option<ClassProbabilities>)> {
    let state = TrainState::init(ds, selected, cfg)?;
    mixfix_run_with(state, ds, selected, cfg, holdout)
}

pub fn mixfix_run_with<L: Learner>(
    mut state: TrainState<L>,
    ds: &NoisyDataset,
    selected: &SelectionResult,
    cfg: &MixFixConfig,
    holdout: Option<&NoisyDataset>,
) -> Result<(TrainState<L>, Option<ClassProbabilities>)> {
    let holdout_acc = |model: &L| -> Result<Option<f64>> {
        holdout
            .map(|h| {
                let truth = h.true_labels().unwrap_or(h.noisy_labels());
                Ok(model.predict(h.embeddings())?.accuracy(truth.as_slice()))
            })
            .transpose()
    };
    if let Some(first) = state.history.last_mut() {
        if first.holdout_acc.is_none() {
            first.holdout_acc = holdout_acc(&state.model)?;
        }
    }
    for _ in 0..cfg.epochs {
        state = mixfix_epoch(state, ds, selected, cfg)?;
        let acc = holdout_acc(&state.model)?;
        state.history.last_mut().expect("epoch recorded").holdout_acc = acc;
    }
    let final_probs = holdout
        .map(|h| state.model.predict(h.embeddings()))
        .transpose()?;
    Ok((state, final_probs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{inject_noise, LabelVector, NoiseSpec};

    #[test]
    fn decide_absorbs_confident_agreement() {
        let (d, l) = mixfix_decide(&[0.9, 0.05, 0.05], 0, 0.7, 0.8).unwrap();
        assert_eq!((d, l), (Decision::Absorb, 0));
    }

    #[test]
    fn decide_relabels_confident_disagreement() {
        let (d, l) = mixfix_decide(&[0.9, 0.1], 1, 0.7, 0.8).unwrap();
        assert_eq!((d, l), (Decision::Relabel, 0));
    }

    #[test]
    fn decide_drops_in_gap_region() {
        let (d, l) = mixfix_decide(&[0.75, 0.25], 1, 0.7, 0.8).unwrap();
        assert_eq!((d, l), (Decision::Drop, 1));
    }

    #[test]
    fn decide_is_strict_at_threshold() {
        assert_eq!(mixfix_decide(&[0.5, 0.5], 0, 0.5, 0.5).unwrap().0, Decision::Drop);
    }

    #[test]
    fn decide_rejects_bad_input() {
        assert!(mixfix_decide(&[0.5, 0.6], 0, 0.7, 0.8).is_err());
        assert!(mixfix_decide(&[0.5, 0.5], 0, 0.9, 0.8).is_err());
        assert!(mixfix_decide(&[0.5, 0.5], 2, 0.7, 0.8).is_err());
    }

    /// Predicts the truth with certainty and never learns.
    struct Oracle {
        truth: Vec<usize>,
        k: usize,
    }

    impl Learner for Oracle {
        fn predict(&self, x: &EmbeddingMatrix) -> Result<ClassProbabilities> {
            let mut data = vec![0.0; x.rows() * self.k];
            for (i, &t) in self.truth.iter().enumerate() {
                data[i * self.k + t] = 1.0;
            }
            ClassProbabilities::new(x.rows(), self.k, data)
        }
        fn train(&mut self, _: &EmbeddingMatrix, _: &[usize], _: &[usize], _: &ProbeConfig) -> Result<()> {
            Ok(())
        }
    }

    /// Uniform predictions.
    struct Flat(usize);

    impl Learner for Flat {
        fn predict(&self, x: &EmbeddingMatrix) -> Result<ClassProbabilities> {
            Ok(ClassProbabilities::uniform(x.rows(), self.0))
        }
        fn train(&mut self, _: &EmbeddingMatrix, _: &[usize], _: &[usize], _: &ProbeConfig) -> Result<()> {
            Ok(())
        }
    }

    fn noisy_fixture() -> (NoisyDataset, SelectionResult) {
        let n = 400;
        let k = 4;
        let m = EmbeddingMatrix::new(n, 2, (0..2 * n).map(|i| (i % 7) as f32 + 1.0).collect()).unwrap();
        let truth: Vec<usize> = (0..n).map(|i| i % k).collect();
        let clean = NoisyDataset::clean(m, LabelVector::new(truth), k, NoisyDataset::default_class_names(k)).unwrap();
        let ds = inject_noise(&clean, &NoiseSpec::symmetric(0.5, 3), None).unwrap();
        // select every tenth sample regardless of cleanliness
        let scores = (0..n).map(|i| if i % 10 == 0 { 1.0 } else { 0.0 }).collect();
        (ds, SelectionResult::from_scores("t", scores, 0.5))
    }

    #[test]
    fn oracle_probe_recovers_every_label() {
        let (ds, sel) = noisy_fixture();
        let truth = ds.true_labels().unwrap().as_slice().to_vec();
        let oracle = Oracle { truth: truth.clone(), k: 4 };
        let state = TrainState::with_model(&ds, &sel, oracle).unwrap();
        let state = mixfix_epoch(state, &ds, &sel, &MixFixConfig::default()).unwrap();
        let noisy = ds.noisy_labels().as_slice();
        for i in 0..ds.len() {
            if sel.mask[i] {
                assert_eq!(state.origins[i], Origin::Selected);
            } else if noisy[i] == truth[i] {
                assert_eq!(state.origins[i], Origin::Absorbed);
            } else {
                assert_eq!(state.origins[i], Origin::Relabeled);
                assert_eq!(state.labels[i], truth[i]);
            }
        }
        // selected samples keep their (possibly wrong) labels; everything else is fixed
        let non_selected_wrong = (0..ds.len())
            .filter(|&i| !sel.mask[i] && state.labels[i] != truth[i])
            .count();
        assert_eq!(non_selected_wrong, 0);
        assert_eq!(state.history.last().unwrap().n_train, ds.len());
    }

    #[test]
    fn oracle_with_clean_selection_gives_perfect_train_labels() {
        let (ds, _) = noisy_fixture();
        let clean = ds.clean_indicator().unwrap();
        let sel = SelectionResult::from_scores(
            "clean-subset",
            clean.iter().enumerate().map(|(i, &c)| if c && i % 3 == 0 { 1.0 } else { 0.0 }).collect(),
            0.5,
        );
        let truth = ds.true_labels().unwrap().as_slice().to_vec();
        let state = TrainState::with_model(&ds, &sel, Oracle { truth, k: 4 }).unwrap();
        let state = mixfix_epoch(state, &ds, &sel, &MixFixConfig::default()).unwrap();
        assert_eq!(state.history.last().unwrap().train_label_acc, Some(1.0));
    }

    #[test]
    fn uniform_predictions_drop_everything() {
        let (ds, sel) = noisy_fixture();
        let state = TrainState::with_model(&ds, &sel, Flat(4)).unwrap();
        let state = mixfix_epoch(state, &ds, &sel, &MixFixConfig::default()).unwrap();
        assert_eq!(state.train_rows(), sel.selected_indices());
        assert_eq!(state.count(Origin::Dropped), ds.len() - sel.count());
    }

    #[test]
    fn unreachable_thresholds_keep_selected_only() {
        let (ds, sel) = noisy_fixture();
        let truth = ds.true_labels().unwrap().as_slice().to_vec();
        let cfg = MixFixConfig {
            theta_r: 1.0,
            theta_r_prime: 1.0,
            epochs: 3,
            ..Default::default()
        };
        let (state, _) = mixfix_run_with(
            TrainState::with_model(&ds, &sel, Oracle { truth, k: 4 }).unwrap(),
            &ds,
            &sel,
            &cfg,
            None,
        )
        .unwrap();
        assert_eq!(state.history.len(), 4);
        for rec in &state.history {
            assert_eq!(rec.n_train, sel.count());
        }
    }

    #[test]
    fn empty_selection_is_an_error() {
        let (ds, _) = noisy_fixture();
        let none = SelectionResult::from_scores("none", vec![0.0; ds.len()], 0.5);
        assert!(matches!(
            TrainState::init(&ds, &none, &MixFixConfig::default()),
            Err(Error::EmptySelection(_))
        ));
    }

    #[test]
    fn zero_epochs_leave_initial_state() {
        let (ds, sel) = noisy_fixture();
        let cfg = MixFixConfig {
            epochs: 0,
            ..Default::default()
        };
        let init = TrainState::init(&ds, &sel, &cfg).unwrap();
        let (state, _) = mixfix_run(&ds, &sel, &cfg, None).unwrap();
        assert_eq!(state, init);
        assert_eq!(state.train_rows(), sel.selected_indices());
    }

    #[test]
    fn sticky_mode_keeps_absorbed_samples() {
        let (ds, sel) = noisy_fixture();
        let truth = ds.true_labels().unwrap().as_slice().to_vec();
        let cfg = MixFixConfig {
            sticky: true,
            ..Default::default()
        };
        let state = TrainState::with_model(&ds, &sel, Oracle { truth, k: 4 }).unwrap();
        let state = mixfix_epoch(state, &ds, &sel, &cfg).unwrap();
        let absorbed = state.count(Origin::Absorbed);
        // swap in a model that would drop everything; sticky keeps earlier decisions
        let state = TrainState {
            epoch: state.epoch,
            model: Flat(4),
            labels: state.labels,
            origins: state.origins,
            history: state.history,
        };
        let state = mixfix_epoch(state, &ds, &sel, &cfg).unwrap();
        assert_eq!(state.count(Origin::Absorbed), absorbed);
        let state = mixfix_epoch(state, &ds, &sel, &MixFixConfig::default()).unwrap();
        assert_eq!(state.count(Origin::Absorbed), 0);
    }
}
