//! Monte Carlo loop runners: closed self-training, open filtered/rewarded
//! training, and the paired generator-evaluator harness. Every run is a
//! deterministic function of (world, config, seed).

use rand::Rng;
use thiserror::Error;

use crate::learner::{
    self, Dataset, LearnError, Policy, Provenance, Record,
};
use crate::prob::{self, ProbError};
use crate::seed;
use crate::signals::{self, judge_score, JudgeState, SignalError, SignalSpec};
use crate::world::{World, WorldError};

#[derive(Debug, Error)]
pub enum LoopError {
    #[error("invalid loop configuration: {0}")]
    InvalidConfig(String),
    #[error("enumeration budget exceeded: {0} states")]
    BudgetExceeded(usize),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Prob(#[from] ProbError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopMode {
    Closed,
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainerKind {
    /// Fresh self-samples each iteration fully replace prior data.
    SftOnSelf,
    Rft,
    Rlvr,
}

#[derive(Debug, Clone)]
pub struct LoopConfig {
    pub mode: LoopMode,
    pub iterations: usize,
    pub samples_per_iter: usize,
    pub trainer: TrainerKind,
    pub signal: Option<SignalSpec>,
    /// fraction of real (acceptance-set) data mixed in per iteration
    pub mix_in_real: f64,
    pub learning_rate: f64,
    pub group_size: usize,
    pub seed: u64,
}

impl LoopConfig {
    fn validate(&self) -> Result<(), LoopError> {
        if self.iterations < 1 {
            return Err(LoopError::InvalidConfig("iterations must be >= 1".into()));
        }
        if self.samples_per_iter < 1 {
            return Err(LoopError::InvalidConfig(
                "samples_per_iter must be >= 1".into(),
            ));
        }
        if self.learning_rate <= 0.0 {
            return Err(LoopError::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.mix_in_real) {
            return Err(LoopError::InvalidConfig("mix_in_real must be in [0,1]".into()));
        }
        match self.mode {
            LoopMode::Closed => {
                if self.signal.is_some() {
                    return Err(LoopError::InvalidConfig(
                        "closed mode forbids a signal spec".into(),
                    ));
                }
                if self.trainer != TrainerKind::SftOnSelf {
                    return Err(LoopError::InvalidConfig(
                        "closed mode supports only sft_on_self".into(),
                    ));
                }
            }
            LoopMode::Open => {
                if self.signal.is_none() {
                    return Err(LoopError::InvalidConfig(
                        "open mode requires a signal spec".into(),
                    ));
                }
                if self.trainer == TrainerKind::Rlvr && self.group_size < 2 {
                    return Err(LoopError::InvalidConfig("group_size must be >= 2".into()));
                }
            }
        }
        Ok(())
    }
}

/// Metrics of one loop iteration. `t = 0` is the initial policy; batch
/// metrics (acceptance rate) start at `t = 1`.
#[derive(Debug, Clone, Copy)]
pub struct IterRecord {
    pub t: usize,
    /// H(Y|Q) in bits under the current policy
    pub output_entropy: f64,
    pub acceptance_rate: Option<f64>,
    /// probability mass on the acceptable set
    pub accuracy: f64,
    /// total mass of outputs below 1/(4|Y|)
    pub tail_mass: f64,
    pub judge_threshold: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub records: Vec<IterRecord>,
}

impl Trajectory {
    pub fn final_record(&self) -> &IterRecord {
        self.records.last().expect("trajectory has records")
    }

    pub fn column(&self, f: impl Fn(&IterRecord) -> f64) -> Vec<f64> {
        self.records.iter().map(f).collect()
    }
}

/// Exact policy metrics against the world, for a fixed x.
pub fn policy_metrics(
    world: &World,
    x: usize,
    policy: &Policy,
) -> Result<(f64, f64, f64), LoopError> {
    let tail_threshold = 1.0 / (4.0 * world.ny() as f64);
    let mut entropy = 0.0;
    let mut accuracy = 0.0;
    let mut tail = 0.0;
    for q in 0..world.nq() {
        let wq = world.q_dist[q];
        if wq <= 0.0 {
            continue;
        }
        let probs = policy.probs(q)?;
        entropy += wq * prob::entropy(&probs)?.value();
        let acc = world.acceptance_set(x, q)?;
        accuracy += wq * acc.iter().map(|&y| probs[y]).sum::<f64>();
        tail += wq
            * probs
                .iter()
                .filter(|&&p| p < tail_threshold)
                .sum::<f64>();
    }
    Ok((entropy, accuracy, tail))
}

/// Expected acceptance probability of the signal under the current policy,
/// computed exactly from the signal table when one exists.
fn expected_acceptance(
    world: &World,
    x: usize,
    policy: &Policy,
    spec: &SignalSpec,
    state: Option<&JudgeState>,
) -> Result<Option<f64>, LoopError> {
    let table = match signals::signal_table(spec, state, world, x) {
        Ok(t) => t,
        Err(SignalError::Unrealizable) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let ny = world.ny();
    let mut rate = 0.0;
    for q in 0..world.nq() {
        let wq = world.q_dist[q];
        if wq <= 0.0 {
            continue;
        }
        let probs = policy.probs(q)?;
        for y in 0..ny {
            rate += wq * probs[y] * table.rows[q * ny + y][1];
        }
    }
    Ok(Some(rate))
}

/// Runs a closed or open training loop from a uniform initial policy and
/// records per-iteration metrics. Deterministic per (config, seed).
pub fn run_loop(world: &World, x: usize, config: &LoopConfig) -> Result<Trajectory, LoopError> {
    config.validate()?;
    if let Some(spec) = &config.signal {
        spec.validate()?;
    }
    let mut policy = Policy::uniform(world.nq(), world.ny());
    let mut rng = seed::rng(config.seed, 0);
    let mut judge = config.signal.as_ref().and_then(|s| s.initial_state());
    let mut trajectory = Trajectory::default();

    let record = |policy: &Policy,
                  t: usize,
                  acceptance: Option<f64>,
                  judge: &Option<JudgeState>|
     -> Result<IterRecord, LoopError> {
        let (output_entropy, accuracy, tail_mass) = policy_metrics(world, x, policy)?;
        Ok(IterRecord {
            t,
            output_entropy,
            acceptance_rate: acceptance,
            accuracy,
            tail_mass,
            judge_threshold: judge.as_ref().map(|s| s.threshold),
        })
    };
    trajectory.records.push(record(&policy, 0, None, &judge)?);

    let n = config.samples_per_iter;
    for t in 1..=config.iterations {
        let mut acceptance = None;
        match config.trainer {
            TrainerKind::SftOnSelf => {
                let n_real = (config.mix_in_real * n as f64).round() as usize;
                let n_self = n - n_real.min(n);
                let mut dataset = learner::generate(&policy, world, n_self, &mut rng)?;
                for _ in 0..n_real {
                    let q = learner::sample_index(&world.q_dist, &mut rng);
                    let acc: Vec<usize> = world.acceptance_set(x, q)?.iter().copied().collect();
                    if acc.is_empty() {
                        continue;
                    }
                    let y = acc[rng.random_range(0..acc.len())];
                    dataset.records.push(Record {
                        q,
                        y,
                        weight: 1.0,
                        provenance: Provenance::Real,
                    });
                }
                if !dataset.is_empty() {
                    learner::sft_step(&mut policy, &dataset, config.learning_rate)?;
                }
            }
            TrainerKind::Rft => {
                let spec = config.signal.as_ref().unwrap();
                let outcome = learner::rft_round(
                    &mut policy,
                    world,
                    x,
                    spec,
                    judge.as_mut(),
                    n,
                    config.learning_rate,
                    &mut rng,
                )?;
                acceptance = Some(outcome.retained.len() as f64 / outcome.proposed as f64);
                if let (Some(state), SignalSpec::DriftingJudge { kappa, .. }) = (&mut judge, spec)
                {
                    let scores: Vec<f64> = outcome
                        .proposals
                        .iter()
                        .map(|&(q, y)| judge_score(world, x, q, y))
                        .collect::<Result<_, _>>()?;
                    *state = signals::drift_step(*kappa, state, &scores);
                }
            }
            TrainerKind::Rlvr => {
                let spec = config.signal.as_ref().unwrap();
                learner::rlvr_step(
                    &mut policy,
                    world,
                    x,
                    spec,
                    judge.as_mut(),
                    config.group_size,
                    config.learning_rate,
                    &mut rng,
                )?;
                acceptance = expected_acceptance(world, x, &policy, spec, judge.as_ref())?;
                if let (Some(state), SignalSpec::DriftingJudge { kappa, .. }) = (&mut judge, spec)
                {
                    let batch = learner::generate(&policy, world, n, &mut rng)?;
                    let scores: Vec<f64> = batch
                        .records
                        .iter()
                        .map(|r| judge_score(world, x, r.q, r.y))
                        .collect::<Result<_, _>>()?;
                    *state = signals::drift_step(*kappa, state, &scores);
                }
            }
        }
        if acceptance.is_none() && config.mode == LoopMode::Open {
            let spec = config.signal.as_ref().unwrap();
            acceptance = expected_acceptance(world, x, &policy, spec, judge.as_ref())?;
        }
        trajectory.records.push(record(&policy, t, acceptance, &judge)?);
    }
    Ok(trajectory)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Evaluator {
    /// Open loop: a fixed external verifier filters retained samples.
    FixedVerifier,
    /// Closed loop: the generator approves outputs in its own current
    /// above-uniform-probability region.
    CoMovingSelfJudge,
}

/// One arm of the generator-evaluator comparison. Both arms share
/// seeding, sample budget, and trainer; only the acceptance rule differs.
pub fn generator_evaluator_run(
    world: &World,
    x: usize,
    evaluator: Evaluator,
    iterations: usize,
    samples_per_iter: usize,
    lr: f64,
    master_seed: u64,
) -> Result<Trajectory, LoopError> {
    let mut policy = Policy::uniform(world.nq(), world.ny());
    let mut rng = seed::rng(master_seed, 1);
    let mut trajectory = Trajectory::default();
    let push = |trajectory: &mut Trajectory,
                policy: &Policy,
                t: usize,
                acceptance: Option<f64>|
     -> Result<(), LoopError> {
        let (output_entropy, accuracy, tail_mass) = policy_metrics(world, x, policy)?;
        trajectory.records.push(IterRecord {
            t,
            output_entropy,
            acceptance_rate: acceptance,
            accuracy,
            tail_mass,
            judge_threshold: None,
        });
        Ok(())
    };
    push(&mut trajectory, &policy, 0, None)?;

    // self-approval region: everything at or above half the uniform mass,
    // so the judge co-moves with the generator and supplies no task signal
    let self_threshold = 0.5 / world.ny() as f64;
    for t in 1..=iterations {
        let mut retained = Dataset::default();
        let mut accepted = 0usize;
        for _ in 0..samples_per_iter {
            let q = learner::sample_index(&world.q_dist, &mut rng);
            let probs = policy.probs(q)?;
            let y = learner::sample_index(&probs, &mut rng);
            let keep = match evaluator {
                Evaluator::FixedVerifier => world.accepts(x, q, y)?,
                Evaluator::CoMovingSelfJudge => probs[y] >= self_threshold,
            };
            if keep {
                accepted += 1;
                retained.records.push(Record {
                    q,
                    y,
                    weight: 1.0,
                    provenance: Provenance::Retained,
                });
            }
        }
        if !retained.is_empty() {
            learner::sft_step(&mut policy, &retained, lr)?;
        }
        push(
            &mut trajectory,
            &policy,
            t,
            Some(accepted as f64 / samples_per_iter as f64),
        )?;
    }
    Ok(trajectory)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn collapse_world(ny: usize, m: usize) -> World {
        World::new(
            vec!["x0".into()],
            vec![1.0],
            vec!["q0".into()],
            vec![1.0],
            (0..ny).map(|i| format!("y{i}")).collect(),
            vec![(0..m).collect::<BTreeSet<_>>()],
        )
        .unwrap()
    }

    fn closed_config(seed: u64) -> LoopConfig {
        LoopConfig {
            mode: LoopMode::Closed,
            iterations: 400,
            samples_per_iter: 24,
            trainer: TrainerKind::SftOnSelf,
            signal: None,
            mix_in_real: 0.0,
            learning_rate: 2.5,
            group_size: 2,
            seed,
        }
    }

    #[test]
    fn closed_loop_collapses() {
        let world = collapse_world(20, 6);
        let traj = run_loop(&world, 0, &closed_config(7)).unwrap();
        let h0 = traj.records[0].output_entropy;
        let h_end = traj.final_record().output_entropy;
        assert!(h_end < h0, "entropy did not contract: {h0} -> {h_end}");
        // tail mass rises mid-run as outputs sink below threshold, then
        // drains as they vanish
        let peak = traj
            .records
            .iter()
            .map(|r| r.tail_mass)
            .fold(0.0f64, f64::max);
        assert!(peak > 0.0);
        assert!(traj.final_record().tail_mass < peak);
    }

    #[test]
    fn open_loop_improves_accuracy() {
        let world = collapse_world(20, 6);
        let config = LoopConfig {
            mode: LoopMode::Open,
            iterations: 50,
            samples_per_iter: 24,
            trainer: TrainerKind::Rlvr,
            signal: Some(SignalSpec::Verifier),
            mix_in_real: 0.0,
            learning_rate: 1.0,
            group_size: 8,
            seed: 7,
        };
        let traj = run_loop(&world, 0, &config).unwrap();
        assert!(traj.final_record().accuracy > traj.records[0].accuracy);
    }

    #[test]
    fn drifting_judge_acceptance_non_increasing() {
        let world = collapse_world(12, 4);
        let config = LoopConfig {
            mode: LoopMode::Open,
            iterations: 50,
            samples_per_iter: 40,
            trainer: TrainerKind::Rft,
            signal: Some(SignalSpec::DriftingJudge {
                kappa: 0.1,
                init_threshold: 0.0,
            }),
            mix_in_real: 0.0,
            learning_rate: 0.3,
            group_size: 2,
            seed: 3,
        };
        let traj = run_loop(&world, 0, &config).unwrap();
        let taus: Vec<f64> = traj
            .records
            .iter()
            .filter_map(|r| r.judge_threshold)
            .collect();
        assert!(taus.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn config_validation() {
        let world = collapse_world(4, 2);
        let mut bad = closed_config(1);
        bad.signal = Some(SignalSpec::Verifier);
        assert!(matches!(
            run_loop(&world, 0, &bad),
            Err(LoopError::InvalidConfig(_))
        ));
        let mut bad = closed_config(1);
        bad.iterations = 0;
        assert!(matches!(
            run_loop(&world, 0, &bad),
            Err(LoopError::InvalidConfig(_))
        ));
        let open_without_signal = LoopConfig {
            mode: LoopMode::Open,
            signal: None,
            ..closed_config(1)
        };
        assert!(matches!(
            run_loop(&world, 0, &open_without_signal),
            Err(LoopError::InvalidConfig(_))
        ));
    }

    #[test]
    fn trajectories_bit_reproducible() {
        let world = collapse_world(10, 3);
        let a = run_loop(&world, 0, &closed_config(99)).unwrap();
        let b = run_loop(&world, 0, &closed_config(99)).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.output_entropy.to_bits(), rb.output_entropy.to_bits());
            assert_eq!(ra.accuracy.to_bits(), rb.accuracy.to_bits());
        }
        let c = run_loop(&world, 0, &closed_config(100)).unwrap();
        assert_ne!(
            a.final_record().output_entropy.to_bits(),
            c.final_record().output_entropy.to_bits()
        );
    }

    #[test]
    fn mixing_real_data_mitigates_collapse() {
        let world = collapse_world(16, 4);
        let mut wins = 0;
        let seeds = 20;
        for s in 0..seeds {
            let pure = run_loop(&world, 0, &closed_config(s)).unwrap();
            let mut mixed_cfg = closed_config(s);
            mixed_cfg.mix_in_real = 0.3;
            let mixed = run_loop(&world, 0, &mixed_cfg).unwrap();
            if mixed.final_record().accuracy > pure.final_record().accuracy {
                wins += 1;
            }
        }
        assert!(wins > seeds / 2, "wins = {wins}/{seeds}");
    }

    #[test]
    fn generator_evaluator_arms() {
        let world = collapse_world(20, 8);
        let mut fixed_wins = 0;
        let seeds = 20;
        for s in 0..seeds {
            let fixed =
                generator_evaluator_run(&world, 0, Evaluator::FixedVerifier, 40, 30, 0.8, s)
                    .unwrap();
            let comoving =
                generator_evaluator_run(&world, 0, Evaluator::CoMovingSelfJudge, 40, 30, 0.8, s)
                    .unwrap();
            if fixed.final_record().accuracy > comoving.final_record().accuracy {
                fixed_wins += 1;
            }
        }
        assert!(fixed_wins >= 15, "fixed arm wins {fixed_wins}/{seeds}");

        // T = 0: both arms are the untouched initial policy
        let a = generator_evaluator_run(&world, 0, Evaluator::FixedVerifier, 0, 10, 0.5, 1)
            .unwrap();
        let b = generator_evaluator_run(&world, 0, Evaluator::CoMovingSelfJudge, 0, 10, 0.5, 1)
            .unwrap();
        assert_eq!(a.records.len(), 1);
        assert_eq!(
            a.final_record().output_entropy,
            b.final_record().output_entropy
        );
    }
}
