//! The external-signal family: exact verifiers, instance targets, noisy
//! rubric judges, direction-consistent biased judges, drifting judges with
//! a tightening threshold, spurious composite labels, and frozen teacher
//! references. Every stateless kind is both samplable and exactly tabulable.

use rand::Rng;
use thiserror::Error;

use crate::learner::Policy;
use crate::prob::Channel;
use crate::world::{World, WorldError};

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("stateful signal kind requires a JudgeState")]
    MissingState,
    #[error("unknown label index {0}")]
    UnknownLabel(usize),
    #[error("invalid parameter {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("signal kind cannot be tabulated per-output; use the pair generator")]
    Unrealizable,
    #[error("no (prompt, output) pairs supplied")]
    EmptyPairs,
    #[error("world cannot realize requested correlation: no outputs with correctness={correct} and tag={tag}")]
    UnrealizableCorrelation { correct: bool, tag: usize },
    #[error(transparent)]
    World(#[from] WorldError),
}

/// Map from outputs to a finite surface tag (e.g. long vs short style).
#[derive(Debug, Clone)]
pub struct SpuriousFeature {
    /// tag per output index, values in {0, 1}
    pub tags: Vec<usize>,
}

/// One generated training pair: the output, its surface tag, and a clean
/// correctness label. Only the covariate (which outputs get sampled) shifts
/// with the requested correlation; the label channel is never corrupted.
#[derive(Debug, Clone, Copy)]
pub struct SpuriousPair {
    pub y: usize,
    pub tag: usize,
    pub label: bool,
}

#[derive(Debug, Clone)]
pub enum SignalSpec {
    /// 1 iff the output is in the acceptable set.
    Verifier,
    /// 1 iff the output equals one specific target.
    InstanceTarget { target: usize },
    /// Each rubric verdict independently flipped with probability `flip_prob`;
    /// signal is 1 iff all (possibly flipped) verdicts are true.
    NoisyRubricJudge { flip_prob: f64 },
    /// Verifier with a fixed-direction verdict override on listed outputs.
    BiasedJudge { overrides: Vec<(usize, bool)> },
    /// Stateful judge comparing an internal score against a threshold that
    /// only tightens (see `drift_step`).
    DriftingJudge { kappa: f64, init_threshold: f64 },
    /// Pair-level signal; exercised through `generate_spurious_pairs`.
    SpuriousComposite { feature: SpuriousFeature },
    /// Frozen reference policy; emits a Bernoulli draw of the teacher's
    /// probability for the sampled output.
    FixedTeacher { policy: Policy },
}

impl SignalSpec {
    pub fn validate(&self) -> Result<(), SignalError> {
        match self {
            SignalSpec::NoisyRubricJudge { flip_prob } => {
                if !(0.0..=0.5).contains(flip_prob) {
                    return Err(SignalError::InvalidParameter {
                        name: "flip_prob",
                        value: *flip_prob,
                    });
                }
            }
            SignalSpec::DriftingJudge { kappa, .. } => {
                if *kappa < 0.0 {
                    return Err(SignalError::InvalidParameter {
                        name: "kappa",
                        value: *kappa,
                    });
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn is_stateful(&self) -> bool {
        matches!(self, SignalSpec::DriftingJudge { .. })
    }

    /// Fresh state for stateful kinds.
    pub fn initial_state(&self) -> Option<JudgeState> {
        match self {
            SignalSpec::DriftingJudge { init_threshold, .. } => Some(JudgeState {
                threshold: *init_threshold,
                evals: 0,
                accepts: 0,
            }),
            _ => None,
        }
    }
}

/// Internal state of a drifting judge: the current threshold plus running
/// acceptance statistics.
#[derive(Debug, Clone, Copy)]
pub struct JudgeState {
    pub threshold: f64,
    pub evals: u64,
    pub accepts: u64,
}

impl JudgeState {
    pub fn acceptance_rate(&self) -> f64 {
        if self.evals == 0 {
            0.0
        } else {
            self.accepts as f64 / self.evals as f64
        }
    }
}

/// Deterministic internal score a drifting judge assigns to an output:
/// graded by output rank, with acceptable outputs in the upper half.
pub fn judge_score(world: &World, x: usize, q: usize, y: usize) -> Result<f64, SignalError> {
    let ny = world.ny() as f64;
    let rank = (y as f64 + 1.0) / (ny + 1.0);
    Ok(if world.accepts(x, q, y)? {
        0.5 + 0.5 * rank
    } else {
        0.5 * rank
    })
}

fn check_labels(world: &World, x: usize, q: usize, y: usize) -> Result<(), SignalError> {
    if x >= world.nx() {
        return Err(SignalError::UnknownLabel(x));
    }
    if q >= world.nq() {
        return Err(SignalError::UnknownLabel(q));
    }
    if y >= world.ny() {
        return Err(SignalError::UnknownLabel(y));
    }
    Ok(())
}

/// One evaluation of the signal on (x, q, y). Stateful kinds require a
/// JudgeState; only its running statistics are touched here, the threshold
/// moves exclusively through `drift_step`.
pub fn eval_signal(
    spec: &SignalSpec,
    state: Option<&mut JudgeState>,
    world: &World,
    x: usize,
    q: usize,
    y: usize,
    rng: &mut impl Rng,
) -> Result<f64, SignalError> {
    check_labels(world, x, q, y)?;
    match spec {
        SignalSpec::Verifier => Ok(world.accepts(x, q, y)? as u8 as f64),
        SignalSpec::InstanceTarget { target } => {
            if *target >= world.ny() {
                return Err(SignalError::UnknownLabel(*target));
            }
            Ok((y == *target) as u8 as f64)
        }
        SignalSpec::NoisyRubricJudge { flip_prob } => {
            spec.validate()?;
            let mut all = true;
            for r in 0..world.num_rubrics() {
                let truth = world.rubric_truth(r, x, q, y);
                let flip = rng.random::<f64>() < *flip_prob;
                all &= truth ^ flip;
            }
            Ok(all as u8 as f64)
        }
        SignalSpec::BiasedJudge { overrides } => {
            let verdict = match overrides.iter().find(|(oy, _)| *oy == y) {
                Some((_, forced)) => *forced,
                None => world.accepts(x, q, y)?,
            };
            Ok(verdict as u8 as f64)
        }
        SignalSpec::DriftingJudge { .. } => {
            let state = state.ok_or(SignalError::MissingState)?;
            let score = judge_score(world, x, q, y)?;
            let accepted = score > state.threshold;
            state.evals += 1;
            state.accepts += accepted as u64;
            Ok(accepted as u8 as f64)
        }
        SignalSpec::SpuriousComposite { .. } => {
            // pair-level label: clean correctness of the output
            Ok(world.accepts(x, q, y)? as u8 as f64)
        }
        SignalSpec::FixedTeacher { policy } => {
            let p = policy.probs(q).map_err(|_| SignalError::UnknownLabel(q))?;
            Ok((rng.random::<f64>() < p[y]) as u8 as f64)
        }
    }
}

/// Exact conditional law P(S | Q, Y) for a fixed x, as a two-valued channel.
/// Stateful kinds need a frozen state; advancing the state invalidates the
/// table and requires a re-query.
pub fn signal_table(
    spec: &SignalSpec,
    state: Option<&JudgeState>,
    world: &World,
    x: usize,
) -> Result<Channel, SignalError> {
    spec.validate()?;
    if x >= world.nx() {
        return Err(SignalError::UnknownLabel(x));
    }
    let (nq, ny) = (world.nq(), world.ny());
    let mut rows = Vec::with_capacity(nq * ny);
    for q in 0..nq {
        for y in 0..ny {
            let p1 = match spec {
                SignalSpec::Verifier => world.accepts(x, q, y)? as u8 as f64,
                SignalSpec::InstanceTarget { target } => {
                    if *target >= ny {
                        return Err(SignalError::UnknownLabel(*target));
                    }
                    (y == *target) as u8 as f64
                }
                SignalSpec::NoisyRubricJudge { flip_prob } => {
                    let mut p = 1.0;
                    for r in 0..world.num_rubrics() {
                        p *= if world.rubric_truth(r, x, q, y) {
                            1.0 - flip_prob
                        } else {
                            *flip_prob
                        };
                    }
                    p
                }
                SignalSpec::BiasedJudge { overrides } => {
                    let verdict = match overrides.iter().find(|(oy, _)| *oy == y) {
                        Some((_, forced)) => *forced,
                        None => world.accepts(x, q, y)?,
                    };
                    verdict as u8 as f64
                }
                SignalSpec::DriftingJudge { .. } => {
                    let state = state.ok_or(SignalError::MissingState)?;
                    (judge_score(world, x, q, y)? > state.threshold) as u8 as f64
                }
                SignalSpec::SpuriousComposite { .. } => return Err(SignalError::Unrealizable),
                SignalSpec::FixedTeacher { policy } => {
                    policy.probs(q).map_err(|_| SignalError::UnknownLabel(q))?[y]
                }
            };
            rows.push(vec![1.0 - p1, p1]);
        }
    }
    Ok(Channel::new(
        vec![("Q".to_string(), nq), ("Y".to_string(), ny)],
        vec![("S".to_string(), 2)],
        rows,
    )
    .map_err(WorldError::from)?)
}

/// Fraction of pairs whose per-rubric verdicts are identical across all
/// repetitions.
pub fn consistency_rate(
    spec: &SignalSpec,
    world: &World,
    pairs: &[(usize, usize, usize)],
    reps: usize,
    rng: &mut impl Rng,
) -> Result<f64, SignalError> {
    if pairs.is_empty() {
        return Err(SignalError::EmptyPairs);
    }
    if reps < 2 {
        return Err(SignalError::InvalidParameter {
            name: "reps",
            value: reps as f64,
        });
    }
    let mut consistent = 0usize;
    for &(x, q, y) in pairs {
        check_labels(world, x, q, y)?;
        let first = rubric_verdicts(spec, world, x, q, y, rng)?;
        let mut same = true;
        for _ in 1..reps {
            // once any rep disagrees the pair is inconsistent, but keep
            // drawing so the randomness consumed is independent of outcomes
            if rubric_verdicts(spec, world, x, q, y, rng)? != first {
                same = false;
            }
        }
        consistent += same as usize;
    }
    Ok(consistent as f64 / pairs.len() as f64)
}

/// Per-rubric verdict vector for one evaluation call. Kinds without rubric
/// structure produce a single overall verdict.
fn rubric_verdicts(
    spec: &SignalSpec,
    world: &World,
    x: usize,
    q: usize,
    y: usize,
    rng: &mut impl Rng,
) -> Result<Vec<bool>, SignalError> {
    match spec {
        SignalSpec::NoisyRubricJudge { flip_prob } => Ok((0..world.num_rubrics())
            .map(|r| {
                let truth = world.rubric_truth(r, x, q, y);
                truth ^ (rng.random::<f64>() < *flip_prob)
            })
            .collect()),
        _ => {
            let mut state = spec.initial_state();
            let v = eval_signal(spec, state.as_mut(), world, x, q, y, rng)?;
            Ok(vec![v >= 0.5])
        }
    }
}

/// Threshold update of the drifting judge: tau' = tau + kappa * (batch
/// acceptance rate under tau). Acceptance over a fixed set is therefore
/// non-increasing across steps.
pub fn drift_step(kappa: f64, state: &JudgeState, batch_scores: &[f64]) -> JudgeState {
    let accepted = batch_scores
        .iter()
        .filter(|&&s| s > state.threshold)
        .count();
    let rate = if batch_scores.is_empty() {
        0.0
    } else {
        accepted as f64 / batch_scores.len() as f64
    };
    JudgeState {
        threshold: state.threshold + kappa * rate,
        evals: state.evals + batch_scores.len() as u64,
        accepts: state.accepts + accepted as u64,
    }
}

/// Generates n (output, label) pairs for context (x, q): labels are always
/// the true correctness; the empirical correlation between the surface tag
/// and the label is rho (within sampling error). rho = 1 reproduces a fully
/// confounded corpus, rho = 0 a re-balanced one.
#[allow(clippy::too_many_arguments)]
pub fn generate_spurious_pairs(
    world: &World,
    x: usize,
    q: usize,
    feature: &SpuriousFeature,
    n: usize,
    rho: f64,
    rng: &mut impl Rng,
) -> Result<Vec<SpuriousPair>, SignalError> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(SignalError::InvalidParameter {
            name: "rho",
            value: rho,
        });
    }
    if n == 0 {
        return Err(SignalError::InvalidParameter {
            name: "n",
            value: 0.0,
        });
    }
    if feature.tags.len() != world.ny() {
        return Err(SignalError::UnknownLabel(feature.tags.len()));
    }
    // cell (correct, tag) -> candidate outputs
    let mut cells: [[Vec<usize>; 2]; 2] = Default::default();
    for y in 0..world.ny() {
        let correct = world.accepts(x, q, y)?;
        cells[correct as usize][feature.tags[y]].push(y);
    }
    let p_aligned = (1.0 + rho) / 2.0;
    // realizability: any cell with positive sampling probability must be
    // populated
    for label in 0..2usize {
        for tag in 0..2usize {
            let aligned = label == tag;
            let p = if aligned { p_aligned } else { 1.0 - p_aligned };
            if p > 0.0 && cells[label][tag].is_empty() {
                return Err(SignalError::UnrealizableCorrelation {
                    correct: label == 1,
                    tag,
                });
            }
        }
    }
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        let label = rng.random::<f64>() < 0.5;
        let aligned = rng.random::<f64>() < p_aligned;
        let tag = if aligned {
            label as usize
        } else {
            1 - label as usize
        };
        let candidates = &cells[label as usize][tag];
        let y = candidates[rng.random_range(0..candidates.len())];
        pairs.push(SpuriousPair { y, tag, label });
    }
    Ok(pairs)
}

/// Pearson correlation between tag and label over a pair set.
pub fn pair_correlation(pairs: &[SpuriousPair]) -> f64 {
    let n = pairs.len() as f64;
    let mt = pairs.iter().map(|p| p.tag as f64).sum::<f64>() / n;
    let ml = pairs.iter().map(|p| p.label as u8 as f64).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vt = 0.0;
    let mut vl = 0.0;
    for p in pairs {
        let dt = p.tag as f64 - mt;
        let dl = p.label as u8 as f64 - ml;
        cov += dt * dl;
        vt += dt * dt;
        vl += dl * dl;
    }
    if vt <= 0.0 || vl <= 0.0 {
        return 0.0;
    }
    cov / (vt.sqrt() * vl.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use crate::world::{is_pi_measurable, Rubric};
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

    fn rubric_world() -> World {
        // 8 outputs, 2 rubrics; acceptance = {0, 1}
        let r1 = Rubric::new(vec![true, true, true, true, false, false, false, false]);
        let r2 = Rubric::new(vec![true, true, false, false, true, true, false, false]);
        World::from_rubrics(
            vec!["x0".into()],
            vec![1.0],
            vec!["q0".into()],
            vec![1.0],
            (0..8).map(|i| format!("y{i}")).collect(),
            vec![r1, r2],
        )
        .unwrap()
    }

    #[test]
    fn verifier_and_instance_target() {
        let world = world_4(&[0, 1]);
        let mut rng = seed::rng(0, 0);
        let v = |y| {
            eval_signal(&SignalSpec::Verifier, None, &world, 0, 0, y, &mut seed::rng(0, 0)).unwrap()
        };
        assert_eq!(v(0), 1.0);
        assert_eq!(v(2), 0.0);
        // acceptable but not the target -> 0
        let spec = SignalSpec::InstanceTarget { target: 0 };
        assert_eq!(eval_signal(&spec, None, &world, 0, 0, 1, &mut rng).unwrap(), 0.0);
        assert_eq!(eval_signal(&spec, None, &world, 0, 0, 0, &mut rng).unwrap(), 1.0);
        assert!(matches!(
            eval_signal(&spec, None, &world, 0, 0, 9, &mut rng),
            Err(SignalError::UnknownLabel(9))
        ));
    }

    #[test]
    fn zero_noise_judge_equals_verifier() {
        let world = rubric_world();
        let spec = SignalSpec::NoisyRubricJudge { flip_prob: 0.0 };
        let mut rng = seed::rng(1, 0);
        for y in 0..8 {
            let s = eval_signal(&spec, None, &world, 0, 0, y, &mut rng).unwrap();
            let v = eval_signal(&SignalSpec::Verifier, None, &world, 0, 0, y, &mut rng).unwrap();
            assert_eq!(s, v);
        }
    }

    #[test]
    fn noisy_judge_table_product_identity_vs_monte_carlo() {
        let world = rubric_world();
        let eps = 0.15;
        let spec = SignalSpec::NoisyRubricJudge { flip_prob: eps };
        let table = signal_table(&spec, None, &world, 0).unwrap();
        let mut rng = seed::rng(2, 0);
        let n = 1_000_000usize;
        // spot-check two outputs against the product-of-flips identity
        for &y in &[0usize, 5] {
            let truths = world.rubric_vector(0, 0, y);
            let expected: f64 = truths
                .iter()
                .map(|&t| if t { 1.0 - eps } else { eps })
                .product();
            assert!((table.rows[y][1] - expected).abs() < 1e-12);
            let mut hits = 0usize;
            for _ in 0..n {
                hits += (eval_signal(&spec, None, &world, 0, 0, y, &mut rng).unwrap() >= 0.5)
                    as usize;
            }
            let rate = hits as f64 / n as f64;
            let sigma = (expected * (1.0 - expected) / n as f64).sqrt();
            assert!((rate - expected).abs() < 3.0 * sigma + 1e-9);
        }
    }

    #[test]
    fn verifier_is_pi_measurable_noisy_judge_is_rubric_measurable() {
        let world = rubric_world();
        let acc_partition = world.acceptance_partition(0, 0).unwrap();
        let verifier = signal_table(&SignalSpec::Verifier, None, &world, 0).unwrap();
        assert!(is_pi_measurable(&verifier, std::slice::from_ref(&acc_partition), 1e-12).unwrap());

        // noisy judge rows depend on y only through the rubric truth vector
        let spec = SignalSpec::NoisyRubricJudge { flip_prob: 0.2 };
        let noisy = signal_table(&spec, None, &world, 0).unwrap();
        let rubric_partition = world.rubric_partition(0, 0).unwrap();
        assert!(
            is_pi_measurable(&noisy, std::slice::from_ref(&rubric_partition), 1e-12).unwrap()
        );

        // a biased judge targeting one output inside a block is not
        let biased = SignalSpec::BiasedJudge {
            overrides: vec![(1, false)],
        };
        let table = signal_table(&biased, None, &world, 0).unwrap();
        assert!(!is_pi_measurable(&table, std::slice::from_ref(&acc_partition), 1e-12).unwrap());
    }

    #[test]
    fn consistency_rate_deterministic_verifier() {
        let world = world_4(&[0, 1]);
        let pairs: Vec<_> = (0..4).map(|y| (0, 0, y)).collect();
        let mut rng = seed::rng(3, 0);
        let rate =
            consistency_rate(&SignalSpec::Verifier, &world, &pairs, 16, &mut rng).unwrap();
        assert_eq!(rate, 1.0);
        assert!(matches!(
            consistency_rate(&SignalSpec::Verifier, &world, &[], 16, &mut rng),
            Err(SignalError::EmptyPairs)
        ));
    }

    #[test]
    fn consistency_rate_single_rubric_half_noise() {
        // 1 rubric, eps = 0.5, 16 reps: closed form 2 * 0.5^16 per pair
        let r = Rubric::new(vec![true, false]);
        let world = World::from_rubrics(
            vec!["x0".into()],
            vec![1.0],
            vec!["q0".into()],
            vec![1.0],
            vec!["y0".into(), "y1".into()],
            vec![r],
        )
        .unwrap();
        let spec = SignalSpec::NoisyRubricJudge { flip_prob: 0.5 };
        let pairs = vec![(0, 0, 0); 20_000];
        let mut rng = seed::rng(4, 0);
        let rate = consistency_rate(&spec, &world, &pairs, 16, &mut rng).unwrap();
        let expected = 2.0 * 0.5f64.powi(16);
        // expected ~ 3e-5; with 20k pairs we mostly see zero hits
        assert!(rate < 1e-3, "rate = {rate}, expected ~ {expected}");
    }

    #[test]
    fn drift_monotone_tightening() {
        let world = world_4(&[0, 1]);
        let spec = SignalSpec::DriftingJudge {
            kappa: 0.1,
            init_threshold: 0.0,
        };
        let mut state = spec.initial_state().unwrap();
        let scores: Vec<f64> = (0..4)
            .map(|y| judge_score(&world, 0, 0, y).unwrap())
            .collect();
        let mut last_rate = f64::INFINITY;
        for _ in 0..20 {
            let accepted = scores.iter().filter(|&&s| s > state.threshold).count();
            let rate = accepted as f64 / scores.len() as f64;
            assert!(rate <= last_rate + 1e-12);
            last_rate = rate;
            state = drift_step(0.1, &state, &scores);
        }
        // zero acceptance leaves the threshold unchanged
        let frozen = JudgeState {
            threshold: 2.0,
            evals: 0,
            accepts: 0,
        };
        let next = drift_step(0.1, &frozen, &scores);
        assert_eq!(next.threshold, 2.0);
        // kappa = 0 is a fixed reference
        let stable = drift_step(0.0, &state, &scores);
        assert_eq!(stable.threshold, state.threshold);
    }

    #[test]
    fn drifting_judge_requires_state() {
        let world = world_4(&[0]);
        let spec = SignalSpec::DriftingJudge {
            kappa: 0.1,
            init_threshold: 0.0,
        };
        let mut rng = seed::rng(5, 0);
        assert!(matches!(
            eval_signal(&spec, None, &world, 0, 0, 0, &mut rng),
            Err(SignalError::MissingState)
        ));
        assert!(matches!(
            signal_table(&spec, None, &world, 0),
            Err(SignalError::MissingState)
        ));
        // frozen state tabulates fine
        let state = spec.initial_state().unwrap();
        assert!(signal_table(&spec, Some(&state), &world, 0).is_ok());
    }

    #[test]
    fn spurious_pairs_extremes_and_balance() {
        // 8 outputs: 0..4 correct; tags alternate within both classes
        let world = World::new(
            vec!["x0".into()],
            vec![1.0],
            vec!["q0".into()],
            vec![1.0],
            (0..8).map(|i| format!("y{i}")).collect(),
            vec![(0..4).collect::<BTreeSet<_>>()],
        )
        .unwrap();
        let feature = SpuriousFeature {
            tags: vec![1, 1, 0, 0, 0, 0, 1, 1],
        };
        let mut rng = seed::rng(6, 0);
        let n = 40_000;
        let confounded =
            generate_spurious_pairs(&world, 0, 0, &feature, n, 1.0, &mut rng).unwrap();
        assert!(confounded
            .iter()
            .all(|p| p.label == (p.tag == 1) && p.label == world.accepts(0, 0, p.y).unwrap()));
        let balanced = generate_spurious_pairs(&world, 0, 0, &feature, n, 0.0, &mut rng).unwrap();
        let corr = pair_correlation(&balanced);
        assert!(corr.abs() < 2.0 / (n as f64).sqrt());
        assert!(balanced
            .iter()
            .all(|p| p.label == world.accepts(0, 0, p.y).unwrap()));

        // a world without correct short-style outputs cannot realize rho = 0
        let skewed = SpuriousFeature {
            tags: vec![1, 1, 1, 1, 0, 0, 0, 0],
        };
        assert!(matches!(
            generate_spurious_pairs(&world, 0, 0, &skewed, 10, 0.0, &mut rng),
            Err(SignalError::UnrealizableCorrelation { .. })
        ));
        // but rho = 1 only needs the aligned cells
        assert!(generate_spurious_pairs(&world, 0, 0, &skewed, 10, 1.0, &mut rng).is_ok());
    }

    #[test]
    fn eval_marginals_match_table() {
        // Monte Carlo statistics of eval_signal converge to signal_table rows
        let world = rubric_world();
        let spec = SignalSpec::NoisyRubricJudge { flip_prob: 0.3 };
        let table = signal_table(&spec, None, &world, 0).unwrap();
        let mut rng = seed::rng(7, 0);
        let n = 200_000usize;
        for y in [0usize, 3, 7] {
            let mut hits = 0usize;
            for _ in 0..n {
                hits +=
                    (eval_signal(&spec, None, &world, 0, 0, y, &mut rng).unwrap() >= 0.5) as usize;
            }
            let p = table.rows[y][1];
            let sigma = (p * (1.0 - p) / n as f64).sqrt().max(1e-9);
            assert!(((hits as f64 / n as f64) - p).abs() < 3.5 * sigma);
        }
    }
}
