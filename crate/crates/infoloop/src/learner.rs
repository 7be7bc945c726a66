//! Categorical softmax policies and the three trainers: supervised
//! fine-tuning on a fixed dataset, rejection-sampling fine-tuning on
//! filtered self-samples, and policy-gradient training on verifiable
//! rewards with a group-mean baseline.
//!
//! All steps are full-batch; randomness enters only through output
//! sampling, never through the gradient computation itself.

use rand::Rng;
use thiserror::Error;

use crate::signals::{self, JudgeState, SignalError, SignalSpec};
use crate::world::{World, WorldError};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("unknown prompt index {0}")]
    UnknownPrompt(usize),
    #[error("unknown output index {0}")]
    UnknownOutput(usize),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid checkpoint line: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Real,
    Synthetic,
    Retained,
}

impl Provenance {
    fn tag(self) -> &'static str {
        match self {
            Provenance::Real => "real",
            Provenance::Synthetic => "synthetic",
            Provenance::Retained => "retained",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Record {
    pub q: usize,
    pub y: usize,
    pub weight: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Logit table over (prompt, output) inducing P(Y|Q) by row softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    logits: Vec<Vec<f64>>,
}

impl Policy {
    /// Zero logits: uniform over outputs for every prompt.
    pub fn uniform(nq: usize, ny: usize) -> Self {
        Policy {
            logits: vec![vec![0.0; ny]; nq],
        }
    }

    pub fn from_logits(logits: Vec<Vec<f64>>) -> Self {
        Policy { logits }
    }

    pub fn nq(&self) -> usize {
        self.logits.len()
    }

    pub fn ny(&self) -> usize {
        self.logits.first().map_or(0, |r| r.len())
    }

    pub fn logits(&self) -> &[Vec<f64>] {
        &self.logits
    }

    /// Additive update to a single logit. Out-of-range indices are errors.
    pub fn bump_logit(&mut self, q: usize, y: usize, delta: f64) -> Result<(), LearnError> {
        let row = self.logits.get_mut(q).ok_or(LearnError::UnknownPrompt(q))?;
        let cell = row.get_mut(y).ok_or(LearnError::UnknownOutput(y))?;
        *cell += delta;
        Ok(())
    }

    /// Softmax of the prompt's logit row, max-subtracted for stability.
    pub fn probs(&self, q: usize) -> Result<Vec<f64>, LearnError> {
        let row = self.logits.get(q).ok_or(LearnError::UnknownPrompt(q))?;
        Ok(softmax(row))
    }

    pub fn sample(&self, q: usize, rng: &mut impl Rng) -> Result<usize, LearnError> {
        let p = self.probs(q)?;
        Ok(sample_index(&p, rng))
    }

    /// Plain-text checkpoint: one `q<TAB>y<TAB>logit` line per cell. The
    /// float formatting is shortest-roundtrip, so load is bit-exact.
    pub fn save_text(&self) -> String {
        let mut out = String::new();
        for (q, row) in self.logits.iter().enumerate() {
            for (y, &v) in row.iter().enumerate() {
                out.push_str(&format!("{q}\t{y}\t{v:?}\n"));
            }
        }
        out
    }

    pub fn load_text(text: &str) -> Result<Self, LearnError> {
        let mut cells: Vec<(usize, usize, f64)> = Vec::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || LearnError::BadCheckpoint(line.to_string());
            let mut parts = line.split('\t');
            let q: usize = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let y: usize = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let v: f64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            cells.push((q, y, v));
        }
        if cells.is_empty() {
            return Err(LearnError::BadCheckpoint("empty checkpoint".into()));
        }
        let nq = cells.iter().map(|c| c.0).max().unwrap() + 1;
        let ny = cells.iter().map(|c| c.1).max().unwrap() + 1;
        let mut logits = vec![vec![0.0; ny]; nq];
        for (q, y, v) in cells {
            logits[q][y] = v;
        }
        Ok(Policy { logits })
    }
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn sample_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Gradient of the weighted mean log-likelihood of `dataset` at `policy`:
/// per record, one-hot(y) minus the softmax row, scaled by weight.
pub fn sft_gradient(policy: &Policy, dataset: &Dataset) -> Result<Vec<Vec<f64>>, LearnError> {
    if dataset.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let mut grad = vec![vec![0.0; policy.ny()]; policy.nq()];
    let total_weight: f64 = dataset.records.iter().map(|r| r.weight).sum();
    if total_weight <= 0.0 {
        return Err(LearnError::EmptyDataset);
    }
    for rec in &dataset.records {
        let p = policy.probs(rec.q)?;
        if rec.y >= policy.ny() {
            return Err(LearnError::UnknownPrompt(rec.y));
        }
        let w = rec.weight / total_weight;
        for y in 0..policy.ny() {
            let one = (y == rec.y) as usize as f64;
            grad[rec.q][y] += w * (one - p[y]);
        }
    }
    Ok(grad)
}

/// One full-batch gradient-ascent step on the weighted mean log-likelihood.
pub fn sft_step(policy: &mut Policy, dataset: &Dataset, lr: f64) -> Result<(), LearnError> {
    let grad = sft_gradient(policy, dataset)?;
    for (row, grow) in policy.logits.iter_mut().zip(&grad) {
        for (v, g) in row.iter_mut().zip(grow) {
            *v += lr * g;
        }
    }
    Ok(())
}

/// Outcome of one rejection-sampling round.
pub struct RftOutcome {
    pub retained: Dataset,
    pub proposed: usize,
    /// every sampled (q, y), accepted or not
    pub proposals: Vec<(usize, usize)>,
    /// true when nothing passed the filter and the policy was left unchanged
    pub empty_retained: bool,
}

/// One rejection-sampling fine-tuning round: sample prompts and outputs from
/// the current policy, keep those the signal accepts, SFT on the kept set.
#[allow(clippy::too_many_arguments)]
pub fn rft_round(
    policy: &mut Policy,
    world: &World,
    x: usize,
    spec: &SignalSpec,
    state: Option<&mut JudgeState>,
    n_samples: usize,
    lr: f64,
    rng: &mut impl Rng,
) -> Result<RftOutcome, LearnError> {
    let mut retained = Dataset::default();
    let mut proposals = Vec::with_capacity(n_samples);
    let mut state = state;
    for _ in 0..n_samples {
        let q = sample_index(&world.q_dist, rng);
        let y = policy.sample(q, rng)?;
        proposals.push((q, y));
        let s = signals::eval_signal(spec, state.as_deref_mut(), world, x, q, y, rng)?;
        if s >= 0.5 {
            retained.records.push(Record {
                q,
                y,
                weight: 1.0,
                provenance: Provenance::Retained,
            });
        }
    }
    let empty = retained.is_empty();
    if !empty {
        sft_step(policy, &retained, lr)?;
    }
    Ok(RftOutcome {
        retained,
        proposed: n_samples,
        proposals,
        empty_retained: empty,
    })
}

/// Expected policy-gradient update for one prompt group: rewards from the
/// signal, baseline = group mean, advantages weight the score gradients.
#[allow(clippy::too_many_arguments)]
pub fn rlvr_step(
    policy: &mut Policy,
    world: &World,
    x: usize,
    spec: &SignalSpec,
    state: Option<&mut JudgeState>,
    group_size: usize,
    lr: f64,
    rng: &mut impl Rng,
) -> Result<(), LearnError> {
    let ny = policy.ny();
    let mut grad = vec![vec![0.0; ny]; policy.nq()];
    let mut state = state;
    for q in 0..world.nq() {
        let wq = world.q_dist[q];
        if wq <= 0.0 {
            continue;
        }
        let probs = policy.probs(q)?;
        let mut samples = Vec::with_capacity(group_size);
        let mut rewards = Vec::with_capacity(group_size);
        for _ in 0..group_size {
            let y = sample_index(&probs, rng);
            let r = signals::eval_signal(spec, state.as_deref_mut(), world, x, q, y, rng)?;
            samples.push(y);
            rewards.push(r);
        }
        let baseline: f64 = rewards.iter().sum::<f64>() / group_size as f64;
        for (&y, &r) in samples.iter().zip(&rewards) {
            let adv = r - baseline;
            if adv == 0.0 {
                continue;
            }
            let scale = wq * adv / group_size as f64;
            for yy in 0..ny {
                let one = (yy == y) as usize as f64;
                grad[q][yy] += scale * (one - probs[yy]);
            }
        }
    }
    for (row, grow) in policy.logits.iter_mut().zip(&grad) {
        for (v, g) in row.iter_mut().zip(grow) {
            *v += lr * g;
        }
    }
    Ok(())
}

/// Samples n (q, y) records from P(Q) x policy, tagged synthetic.
pub fn generate(
    policy: &Policy,
    world: &World,
    n: usize,
    rng: &mut impl Rng,
) -> Result<Dataset, LearnError> {
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let q = sample_index(&world.q_dist, rng);
        let y = policy.sample(q, rng)?;
        records.push(Record {
            q,
            y,
            weight: 1.0,
            provenance: Provenance::Synthetic,
        });
    }
    Ok(Dataset { records })
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use std::collections::BTreeSet;

    fn world_4(acc: &[usize]) -> World {
        World::new(
            vec!["x0".into()],
            vec![1.0],
            vec!["q0".into()],
            vec![1.0],
            (0..4).map(|i| format!("y{i}")).collect(),
            vec![acc.iter().copied().collect::<BTreeSet<_>>()],
        )
        .unwrap()
    }

    #[test]
    fn softmax_basics() {
        let p = Policy::uniform(1, 4);
        let probs = p.probs(0).unwrap();
        assert!(probs.iter().all(|&v| (v - 0.25).abs() < 1e-12));
        // logits (ln 3, 0) -> (0.75, 0.25)
        let p = Policy::from_logits(vec![vec![3.0f64.ln(), 0.0]]);
        let probs = p.probs(0).unwrap();
        assert!((probs[0] - 0.75).abs() < 1e-12);
        // shift invariance
        let shifted = Policy::from_logits(vec![vec![3.0f64.ln() + 7.0, 7.0]]);
        let sp = shifted.probs(0).unwrap();
        assert!((sp[0] - probs[0]).abs() < 1e-12);
        assert!(matches!(p.probs(3), Err(LearnError::UnknownPrompt(3))));
    }

    #[test]
    fn sft_single_target_closed_form() {
        // |Y|=2, zero logits, one target, lr=1 -> logits (0.5, -0.5)
        let mut p = Policy::uniform(1, 2);
        let ds = Dataset {
            records: vec![Record {
                q: 0,
                y: 0,
                weight: 1.0,
                provenance: Provenance::Real,
            }],
        };
        sft_step(&mut p, &ds, 1.0).unwrap();
        assert!((p.logits[0][0] - 0.5).abs() < 1e-12);
        assert!((p.logits[0][1] + 0.5).abs() < 1e-12);
        let probs = p.probs(0).unwrap();
        assert!((probs[0] - 0.7310585786300049).abs() < 1e-12);
    }

    #[test]
    fn sft_repeated_steps_monotone() {
        let mut p = Policy::uniform(1, 4);
        let ds = Dataset {
            records: vec![Record {
                q: 0,
                y: 2,
                weight: 1.0,
                provenance: Provenance::Real,
            }],
        };
        let mut last = p.probs(0).unwrap()[2];
        for _ in 0..200 {
            sft_step(&mut p, &ds, 1.0).unwrap();
            let now = p.probs(0).unwrap()[2];
            assert!(now > last);
            last = now;
        }
        assert!(last > 0.95);
    }

    #[test]
    fn sft_rejects_empty_dataset() {
        let mut p = Policy::uniform(1, 2);
        assert!(matches!(
            sft_step(&mut p, &Dataset::default(), 1.0),
            Err(LearnError::EmptyDataset)
        ));
    }

    /// Central finite differences of the weighted mean log-likelihood.
    fn fd_gradient(policy: &Policy, dataset: &Dataset, h: f64) -> Vec<Vec<f64>> {
        let objective = |p: &Policy| -> f64 {
            let total_w: f64 = dataset.records.iter().map(|r| r.weight).sum();
            dataset
                .records
                .iter()
                .map(|r| r.weight * p.probs(r.q).unwrap()[r.y].ln())
                .sum::<f64>()
                / total_w
        };
        let mut grad = vec![vec![0.0; policy.ny()]; policy.nq()];
        for q in 0..policy.nq() {
            for y in 0..policy.ny() {
                let mut plus = policy.clone();
                plus.logits[q][y] += h;
                let mut minus = policy.clone();
                minus.logits[q][y] -= h;
                grad[q][y] = (objective(&plus) - objective(&minus)) / (2.0 * h);
            }
        }
        grad
    }

    #[test]
    fn sft_gradient_matches_finite_differences() {
        let policy = Policy::from_logits(vec![vec![0.3, -0.7, 1.1], vec![0.0, 0.4, -0.2]]);
        let ds = Dataset {
            records: vec![
                Record {
                    q: 0,
                    y: 1,
                    weight: 2.0,
                    provenance: Provenance::Real,
                },
                Record {
                    q: 1,
                    y: 0,
                    weight: 0.5,
                    provenance: Provenance::Real,
                },
                Record {
                    q: 0,
                    y: 2,
                    weight: 1.0,
                    provenance: Provenance::Real,
                },
            ],
        };
        let analytic = sft_gradient(&policy, &ds).unwrap();
        let fd = fd_gradient(&policy, &ds, 1e-5);
        for q in 0..2 {
            for y in 0..3 {
                let denom = fd[q][y].abs().max(1e-8);
                assert!(
                    (analytic[q][y] - fd[q][y]).abs() / denom <= 1e-5,
                    "grad mismatch at ({q},{y}): {} vs {}",
                    analytic[q][y],
                    fd[q][y]
                );
            }
        }
    }

    #[test]
    fn rft_retains_conditional_distribution() {
        // uniform policy over 4 outputs, acceptance {0, 1}, exact verifier
        let world = world_4(&[0, 1]);
        let mut policy = Policy::uniform(1, 4);
        let mut rng = seed::rng(11, 0);
        let outcome = rft_round(
            &mut policy,
            &world,
            0,
            &SignalSpec::Verifier,
            None,
            20_000,
            0.0,
            &mut rng,
        )
        .unwrap();
        let rate = outcome.retained.len() as f64 / outcome.proposed as f64;
        assert!((rate - 0.5).abs() < 0.02);
        let n0 = outcome.retained.records.iter().filter(|r| r.y == 0).count();
        let frac = n0 as f64 / outcome.retained.len() as f64;
        assert!((frac - 0.5).abs() < 0.03);
        assert!(outcome
            .retained
            .records
            .iter()
            .all(|r| r.provenance == Provenance::Retained));
    }

    #[test]
    fn rft_chi_square_against_renormalized_target() {
        // retained distribution must match pi(y|q) * a(y) renormalized
        let world = world_4(&[1, 2]);
        let mut policy = Policy::from_logits(vec![vec![0.0, 1.0, -0.5, 0.3]]);
        let probs = policy.probs(0).unwrap();
        let mass: f64 = probs[1] + probs[2];
        let target = [probs[1] / mass, probs[2] / mass];
        let mut rng = seed::rng(13, 0);
        let outcome = rft_round(
            &mut policy,
            &world,
            0,
            &SignalSpec::Verifier,
            None,
            100_000,
            0.0,
            &mut rng,
        )
        .unwrap();
        let n = outcome.retained.len() as f64;
        let counts = [
            outcome.retained.records.iter().filter(|r| r.y == 1).count() as f64,
            outcome.retained.records.iter().filter(|r| r.y == 2).count() as f64,
        ];
        let chi2: f64 = counts
            .iter()
            .zip(&target)
            .map(|(c, t)| (c - n * t).powi(2) / (n * t))
            .sum();
        // 1 dof, 99.9th percentile ~ 10.8
        assert!(chi2 < 10.8, "chi2 = {chi2}");
    }

    #[test]
    fn rft_empty_retained_is_noop() {
        let world = world_4(&[]);
        let mut policy = Policy::uniform(1, 4);
        let before = policy.clone();
        let mut rng = seed::rng(5, 0);
        let outcome = rft_round(
            &mut policy,
            &world,
            0,
            &SignalSpec::Verifier,
            None,
            100,
            0.5,
            &mut rng,
        )
        .unwrap();
        assert!(outcome.empty_retained);
        assert_eq!(policy, before);
    }

    #[test]
    fn rlvr_constant_reward_is_noop() {
        let world = world_4(&[0, 1, 2, 3]); // verifier accepts everything
        let mut policy = Policy::from_logits(vec![vec![0.1, -0.2, 0.3, 0.0]]);
        let before = policy.clone();
        let mut rng = seed::rng(3, 0);
        rlvr_step(
            &mut policy,
            &world,
            0,
            &SignalSpec::Verifier,
            None,
            8,
            0.5,
            &mut rng,
        )
        .unwrap();
        for (a, b) in policy.logits[0].iter().zip(&before.logits[0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rlvr_expected_direction_matches_mc_oracle() {
        // Monte Carlo estimate of the expected update vs the exact gradient
        // of E[A * grad log pi] for a verifier reward.
        let world = world_4(&[0]);
        let base = Policy::from_logits(vec![vec![0.2, -0.1, 0.0, 0.4]]);
        let probs = base.probs(0).unwrap();
        let trials = 200_000;
        let g = 4;
        let mut mean_update = vec![0.0; 4];
        let mut rng = seed::rng(77, 0);
        for _ in 0..trials {
            let mut pol = base.clone();
            rlvr_step(&mut pol, &world, 0, &SignalSpec::Verifier, None, g, 1.0, &mut rng)
                .unwrap();
            for y in 0..4 {
                mean_update[y] += (pol.logits()[0][y] - base.logits()[0][y]) / trials as f64;
            }
        }
        // oracle: expanding the group-mean baseline and using
        // E[grad log pi] = 0 gives E[update] = (1 - 1/G) sum_y pi(y)
        // (r(y) - E r) (e_y - pi).
        let r: Vec<f64> = (0..4).map(|y| (y == 0) as usize as f64).collect();
        let r_bar: f64 = probs.iter().zip(&r).map(|(p, r)| p * r).sum();
        let mut oracle = vec![0.0; 4];
        let scale = 1.0 - 1.0 / g as f64;
        for y in 0..4 {
            for yy in 0..4 {
                let one = (yy == y) as usize as f64;
                oracle[yy] += scale * probs[y] * (r[y] - r_bar) * (one - probs[yy]);
            }
        }
        for y in 0..4 {
            assert!(
                (mean_update[y] - oracle[y]).abs() < 5e-3,
                "y={y}: {} vs {}",
                mean_update[y],
                oracle[y]
            );
        }
    }

    #[test]
    fn generate_matches_policy_frequencies() {
        let world = world_4(&[0]);
        let policy = Policy::from_logits(vec![vec![1.0, 0.0, -1.0, 0.5]]);
        let probs = policy.probs(0).unwrap();
        let mut rng = seed::rng(9, 0);
        let n = 100_000;
        let ds = generate(&policy, &world, n, &mut rng).unwrap();
        assert!(ds.records.iter().all(|r| r.provenance == Provenance::Synthetic));
        for y in 0..4 {
            let count = ds.records.iter().filter(|r| r.y == y).count() as f64;
            let sigma = (n as f64 * probs[y] * (1.0 - probs[y])).sqrt();
            assert!(
                (count - n as f64 * probs[y]).abs() < 3.0 * sigma + 1.0,
                "y={y}"
            );
        }
    }

    #[test]
    fn point_mass_policy_generates_identical_records() {
        let world = world_4(&[0]);
        let policy = Policy::from_logits(vec![vec![100.0, 0.0, 0.0, 0.0]]);
        let mut rng = seed::rng(1, 0);
        let ds = generate(&policy, &world, 50, &mut rng).unwrap();
        assert!(ds.records.iter().all(|r| r.y == 0));
    }

    #[test]
    fn checkpoint_roundtrip_bit_exact() {
        let policy = Policy::from_logits(vec![
            vec![0.1, -1.0 / 3.0, f64::MIN_POSITIVE],
            vec![1e300, -2.5e-10, 7.0],
        ]);
        let text = policy.save_text();
        let loaded = Policy::load_text(&text).unwrap();
        for (a, b) in policy.logits.iter().flatten().zip(loaded.logits.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(Policy::load_text("not a checkpoint").is_err());
    }

    #[test]
    fn trainers_deterministic_per_seed() {
        let world = world_4(&[0, 1]);
        let run = || {
            let mut policy = Policy::uniform(1, 4);
            let mut rng = seed::rng(123, 4);
            for _ in 0..10 {
                rlvr_step(
                    &mut policy,
                    &world,
                    0,
                    &SignalSpec::Verifier,
                    None,
                    8,
                    0.3,
                    &mut rng,
                )
                .unwrap();
            }
            policy
        };
        let a = run();
        let b = run();
        for (x, y) in a.logits.iter().flatten().zip(b.logits.iter().flatten()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn self_training_gradient_is_zero_in_expectation() {
        // SFT on self-samples: averaged gradient over many samples ~ 0
        let world = world_4(&[0]);
        let policy = Policy::from_logits(vec![vec![0.5, -0.3, 0.1, 0.0]]);
        let mut rng = seed::rng(21, 0);
        let n = 100_000;
        let ds = generate(&policy, &world, n, &mut rng).unwrap();
        let grad = sft_gradient(&policy, &ds).unwrap();
        let probs = policy.probs(0).unwrap();
        for y in 0..4 {
            // per-sample gradient variance ~ p(1-p); mean has sigma/sqrt(n)
            let sigma = (probs[y] * (1.0 - probs[y]) / n as f64).sqrt();
            assert!(grad[0][y].abs() < 3.5 * sigma + 1e-9, "y={y}: {}", grad[0][y]);
        }
    }
}
