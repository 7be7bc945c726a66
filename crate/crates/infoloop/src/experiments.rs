//! Named experiment scenarios. Each one binds a world, signals, and a
//! training loop into a report of pass/fail assertions plus plot-ready
//! tables. Everything downstream of (config, master seed) is deterministic.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::config::{
    self, ClosedLoopDpiConfig, ConfigError, DiversityConfig,
    GeneratorEvaluatorConfig, JudgeDriftConfig, MetaLevelConfig, NoiseRobustnessConfig,
    OpenLoopBoundConfig, RewardHackingConfig,
};
use crate::exact::{self, ExactError, ExactReport};
use crate::learner::{self, Dataset, LearnError, Policy, Provenance, Record};
use crate::loops::{
    self, Evaluator, LoopConfig, LoopError, LoopMode, TrainerKind,
};
use crate::par::Parallelism;
use crate::prob::{self, JointTable, ProbError};
use crate::seed;
use crate::signals::{self, SignalError, SignalSpec, SpuriousFeature};
use crate::world::{self, Partition, World, WorldError};

#[derive(Debug, Error)]
pub enum ExpError {
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("experiment produced no assertions")]
    NoAssertions,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Loop(#[from] LoopError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Prob(#[from] ProbError),
}

#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub name: String,
    /// the expected relation, e.g. "min residual >= -1e-9"
    pub relation: String,
    pub observed: f64,
    pub pass: bool,
}

/// Plot-ready table; cells are pre-formatted strings.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Fixed 12-significant-digit numeric formatting for emitted CSV cells.
pub fn sig12(v: f64) -> String {
    format!("{:.11e}", v)
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub id: String,
    pub config_digest: String,
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    pub metrics: BTreeMap<String, f64>,
    pub assertions: Vec<Assertion>,
    /// artifact paths, filled in by the emitter
    pub artifacts: Vec<String>,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        !self.assertions.is_empty() && self.assertions.iter().all(|a| a.pass)
    }
}

struct Reporter {
    report: ExperimentReport,
}

impl Reporter {
    fn new(id: &str, digest: &str, master_seed: u64) -> Self {
        Reporter {
            report: ExperimentReport {
                id: id.to_string(),
                config_digest: digest.to_string(),
                master_seed,
                seeds: Vec::new(),
                metrics: BTreeMap::new(),
                assertions: Vec::new(),
                artifacts: Vec::new(),
                tables: Vec::new(),
            },
        }
    }

    fn metric(&mut self, name: &str, v: f64) {
        self.report.metrics.insert(name.to_string(), v);
    }

    fn check(&mut self, name: &str, relation: &str, observed: f64, pass: bool) {
        self.report.assertions.push(Assertion {
            name: name.to_string(),
            relation: relation.to_string(),
            observed,
            pass,
        });
    }

    fn check_le(&mut self, name: &str, observed: f64, bound: f64) {
        self.check(name, &format!("<= {bound:e}"), observed, observed <= bound);
    }

    fn check_ge(&mut self, name: &str, observed: f64, bound: f64) {
        self.check(name, &format!(">= {bound:e}"), observed, observed >= bound);
    }

    fn table(&mut self, t: Table) {
        self.report.tables.push(t);
    }

    fn finish(self) -> Result<ExperimentReport, ExpError> {
        if self.report.assertions.is_empty() {
            return Err(ExpError::NoAssertions);
        }
        Ok(self.report)
    }
}

pub const EXPERIMENTS: &[(&str, &str)] = &[
    (
        "exp_closed_loop_dpi",
        "exact closed-loop information monotonicity across the reference spec suite",
    ),
    (
        "exp_open_loop_bound",
        "exact open-loop information budget with revealing, constant, and partial signals",
    ),
    (
        "exp_meta_level",
        "per-interaction information and steps-to-threshold: verifier vs instance-target supervision",
    ),
    (
        "exp_diversity",
        "incremental information of repeated observations vs fresh partition blocks",
    ),
    (
        "exp_noise_robustness",
        "clean vs symmetric-noise vs biased judge training arms on the rubric world",
    ),
    (
        "exp_reward_hacking",
        "discriminator training on confounded vs decorrelated pair corpora, with efficiency split",
    ),
    (
        "exp_judge_drift",
        "drifting judge acceptance over a fixed evaluation set",
    ),
    (
        "exp_generator_evaluator",
        "paired fixed-verifier vs co-moving self-judge arms",
    ),
];

pub fn default_config_toml(id: &str) -> Result<String, ExpError> {
    let text = match id {
        "exp_closed_loop_dpi" => toml::to_string_pretty(&ClosedLoopDpiConfig::default()),
        "exp_open_loop_bound" => toml::to_string_pretty(&OpenLoopBoundConfig::default()),
        "exp_meta_level" => toml::to_string_pretty(&MetaLevelConfig::default()),
        "exp_diversity" => toml::to_string_pretty(&DiversityConfig::default()),
        "exp_noise_robustness" => toml::to_string_pretty(&NoiseRobustnessConfig::default()),
        "exp_reward_hacking" => toml::to_string_pretty(&RewardHackingConfig::default()),
        "exp_judge_drift" => toml::to_string_pretty(&JudgeDriftConfig::default()),
        "exp_generator_evaluator" => toml::to_string_pretty(&GeneratorEvaluatorConfig::default()),
        _ => return Err(ExpError::UnknownExperiment(id.to_string())),
    };
    Ok(text.expect("default configs serialize"))
}

fn assertion_contract(id: &str) -> &'static [&'static str] {
    match id {
        "exp_closed_loop_dpi" => &[
            "every spec: step residual I(X;Z_t) - I(X;Z_t+1) >= -1e-9 (monotone non-increase)",
            "reference spec: information strictly decreasing at every step",
            "identity-channel spec: information constant and the bound tight to 1e-12",
        ],
        "exp_open_loop_bound" => &[
            "every open spec: I(X;Z_t+1) <= I(X;Z_t) + I(X;S|Z_t) + 1e-9",
            "revealing signal: I(X;Z_t) non-decreasing",
            "constant signal: reduces to the closed analysis within 1e-12 and carries <= 1e-12 bits",
            "partial signal: bound holds with strictly positive slack and positive injected bits",
        ],
        "exp_meta_level" => &[
            "per-interaction bits of the verifier signal equal h2(M/|Y|) to 1e-12 at uniform init",
            "per-interaction bits of the instance-target signal equal h2(1/|Y|) to 1e-12",
            "steps-to-threshold(verifier) <= steps-to-threshold(instance target) in all seeds for M in {4,8,16}",
        ],
        "exp_diversity" => &[
            "verifier is block-measurable for every hypothesis",
            "first observation of a block yields > 1e-6 bits",
            "repeat of an already-seen (q, y) yields <= 1e-12 incremental bits",
            "fresh uncovered-block observations yield > 1e-6 bits each",
            "observation of a block already determined by the rest yields <= 1e-12 bits",
        ],
        "exp_noise_robustness" => &[
            "noisy judge sample-level consistency within 0.24 +/- 0.02 (1000 pairs x 16 reps)",
            "noisy arm mean final accuracy >= clean arm - delta",
            "biased arm mean final accuracy <= clean arm - 2*delta",
        ],
        "exp_reward_hacking" => &[
            "confounded corpus: training reward rises after the plateau point",
            "confounded corpus: held-out balanced accuracy stays within +/- band after 20% of training",
            "decorrelated corpus beats the confounded one on final held-out accuracy by >= 0.1",
            "efficiency under the spurious partition exceeds efficiency under the correctness partition",
        ],
        "exp_judge_drift" => &[
            "acceptance rate over the fixed evaluation set is non-increasing",
            "final acceptance rate below the configured maximum",
            "kappa = 0 leaves the acceptance rate constant",
            "the evaluated outputs are held constant throughout",
        ],
        "exp_generator_evaluator" => &[
            "fixed-verifier arm beats the co-moving arm on final accuracy in >= min_wins of seeds",
            "co-moving arm's mean acceptance rate >= fixed arm's",
            "at T = 0 both arms equal the initial policy",
        ],
        _ => &[],
    }
}

/// Human-readable schema (defaults as TOML) plus the assertion contract.
pub fn describe(id: &str) -> Result<String, ExpError> {
    let description = EXPERIMENTS
        .iter()
        .find(|(eid, _)| *eid == id)
        .map(|(_, d)| *d)
        .ok_or_else(|| ExpError::UnknownExperiment(id.to_string()))?;
    let mut out = format!("{id}: {description}\n\nconfig schema (defaults shown; all fields optional):\n");
    for line in default_config_toml(id)?.lines() {
        out.push_str("  ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str("\nassertions:\n");
    for a in assertion_contract(id) {
        out.push_str("  - ");
        out.push_str(a);
        out.push('\n');
    }
    Ok(out)
}

/// Parses the config text (empty means defaults) and dispatches. The digest
/// covers the text actually used.
pub fn run_experiment(
    id: &str,
    config_text: &str,
    master_seed: u64,
) -> Result<ExperimentReport, ExpError> {
    let text = if config_text.trim().is_empty() {
        default_config_toml(id)?
    } else {
        config_text.to_string()
    };
    let digest = config::canonical_digest(&text)?;
    match id {
        "exp_closed_loop_dpi" => {
            let cfg: ClosedLoopDpiConfig = config::parse_config(&text)?;
            exp_closed_loop_dpi(&cfg, &digest, master_seed)
        }
        "exp_open_loop_bound" => {
            let cfg: OpenLoopBoundConfig = config::parse_config(&text)?;
            exp_open_loop_bound(&cfg, &digest, master_seed)
        }
        "exp_meta_level" => {
            let cfg: MetaLevelConfig = config::parse_config(&text)?;
            exp_meta_level(&cfg, &digest, master_seed)
        }
        "exp_diversity" => {
            let cfg: DiversityConfig = config::parse_config(&text)?;
            exp_diversity(&cfg, &digest, master_seed)
        }
        "exp_noise_robustness" => {
            let cfg: NoiseRobustnessConfig = config::parse_config(&text)?;
            exp_noise_robustness(&cfg, &digest, master_seed)
        }
        "exp_reward_hacking" => {
            let cfg: RewardHackingConfig = config::parse_config(&text)?;
            exp_reward_hacking(&cfg, &digest, master_seed)
        }
        "exp_judge_drift" => {
            let cfg: JudgeDriftConfig = config::parse_config(&text)?;
            exp_judge_drift(&cfg, &digest, master_seed)
        }
        "exp_generator_evaluator" => {
            let cfg: GeneratorEvaluatorConfig = config::parse_config(&text)?;
            exp_generator_evaluator(&cfg, &digest, master_seed)
        }
        _ => Err(ExpError::UnknownExperiment(id.to_string())),
    }
}

fn exact_table(table: &mut Table, spec_name: &str, report: &ExactReport) {
    for r in &report.per_iter {
        table.rows.push(vec![
            spec_name.to_string(),
            r.t.to_string(),
            sig12(r.info_xz),
            r.info_xs_given_z.map(sig12).unwrap_or_default(),
            r.bound_residual.map(sig12).unwrap_or_default(),
        ]);
    }
}

fn min_residual(report: &ExactReport) -> f64 {
    report
        .per_iter
        .iter()
        .filter_map(|r| r.bound_residual)
        .fold(f64::INFINITY, f64::min)
}

pub fn exp_closed_loop_dpi(
    cfg: &ClosedLoopDpiConfig,
    digest: &str,
    master_seed: u64,
) -> Result<ExperimentReport, ExpError> {
    cfg.validate()?;
    let mut rep = Reporter::new("exp_closed_loop_dpi", digest, master_seed);
    let mut table = Table::new(
        "exact_closed",
        &["spec", "t", "info_xz", "info_xs_given_z", "residual"],
    );
    let mut total_states = 0usize;
    for spec_cfg in &cfg.specs {
        let report = exact::exact_loop_analysis(&spec_cfg.to_spec(), Parallelism::Auto)?;
        total_states += report.state_count;
        exact_table(&mut table, &spec_cfg.name, &report);
        let min_res = min_residual(&report);
        rep.check_ge(&format!("{}: monotone non-increase", spec_cfg.name), min_res, -1e-9);
        if spec_cfg.identity_transition {
            let max_abs = report
                .per_iter
                .iter()
                .filter_map(|r| r.bound_residual)
                .fold(0.0f64, |a, r| a.max(r.abs()));
            rep.check_le(&format!("{}: bound tight", spec_cfg.name), max_abs, 1e-12);
            let drift = report
                .per_iter
                .iter()
                .map(|r| (r.info_xz - report.per_iter[0].info_xz).abs())
                .fold(0.0f64, f64::max);
            rep.check_le(&format!("{}: information constant", spec_cfg.name), drift, 1e-12);
        } else if spec_cfg.name == "reference" {
            rep.check(
                "reference: strictly decreasing",
                "min residual > 1e-9",
                min_res,
                min_res > 1e-9,
            );
        }
    }
    rep.metric("total_state_count", total_states as f64);
    rep.table(table);
    rep.finish()
}

pub fn exp_open_loop_bound(
    cfg: &OpenLoopBoundConfig,
    digest: &str,
    master_seed: u64,
) -> Result<ExperimentReport, ExpError> {
    cfg.validate()?;
    let mut rep = Reporter::new("exp_open_loop_bound", digest, master_seed);
    let mut table = Table::new(
        "exact_open",
        &["spec", "t", "info_xz", "info_xs_given_z", "residual"],
    );

    for spec_cfg in [&cfg.revealing, &cfg.constant, &cfg.partial] {
        let report = exact::exact_loop_analysis(&spec_cfg.to_spec(), Parallelism::Auto)?;
        exact_table(&mut table, &spec_cfg.name, &report);
        rep.check_ge(
            &format!("{}: step bound holds", spec_cfg.name),
            min_residual(&report),
            -1e-9,
        );
        match spec_cfg.name.as_str() {
            "revealing" => {
                let min_gain = report
                    .per_iter
                    .windows(2)
                    .map(|w| w[1].info_xz - w[0].info_xz)
                    .fold(f64::INFINITY, f64::min);
                rep.check_ge("revealing: information non-decreasing", min_gain, -1e-9);
            }
            "constant-signal" => {
                let mut closed = spec_cfg.to_spec();
                closed.signal = None;
                let twin = exact::exact_loop_analysis(&closed, Parallelism::Auto)?;
                let max_gap = report
                    .per_iter
                    .iter()
                    .zip(&twin.per_iter)
                    .map(|(a, b)| (a.info_xz - b.info_xz).abs())
                    .fold(0.0f64, f64::max);
                rep.check_le("constant: matches closed analysis", max_gap, 1e-12);
                let max_info_s = report
                    .per_iter
                    .iter()
                    .filter_map(|r| r.info_xs_given_z)
                    .fold(0.0f64, f64::max);
                rep.check_le("constant: signal carries nothing", max_info_s, 1e-12);
            }
            _ => {
                rep.check(
                    "partial: strictly positive slack",
                    "min residual > 0",
                    min_residual(&report),
                    min_residual(&report) > 0.0,
                );
                let min_info_s = report
                    .per_iter
                    .iter()
                    .filter_map(|r| r.info_xs_given_z)
                    .fold(f64::INFINITY, f64::min);
                rep.check_ge("partial: signal injects bits", min_info_s, 1e-6);
            }
        }
    }
    rep.table(table);
    rep.finish()
}

fn uniform_set_world(ny: usize, m: usize) -> Result<World, WorldError> {
    World::new(
        vec!["x0".into()],
        vec![1.0],
        vec!["q0".into()],
        vec![1.0],
        (0..ny).map(|i| format!("y{i}")).collect(),
        vec![(0..m).collect()],
    )
}

/// Exact I(Y;S|Q) of a signal against the uniform initial policy.
fn per_interaction_bits(world: &World, spec: &SignalSpec) -> Result<f64, ExpError> {
    let table = signals::signal_table(spec, None, world, 0)?;
    let (nq, ny) = (world.nq(), world.ny());
    let joint = JointTable::from_fn(
        vec![("Q".into(), nq), ("Y".into(), ny), ("S".into(), 2)],
        |idx| world.q_dist[idx[0]] / ny as f64 * table.rows[idx[0] * ny + idx[1]][idx[2]],
    )?;
    Ok(joint.cond_mutual_info(&["Y"], &["S"], &["Q"])?.value())
}

enum MetaArm {
    /// accept any output the verifier marks acceptable
    Verifier,
    /// accept only the single reference answer
    InstanceTarget,
}

/// Rounds until accuracy on the acceptable set reaches the threshold.
///
/// Matched design: both arms draw the identical uniform exploration stream
/// (off-policy, same derived seed) and apply the same additive logit update
/// to every accepted sample; only the acceptance signal differs. The
/// verifier accepts a superset of what the instance target accepts, so its
/// acceptable-set mass dominates the other arm's at every round. On-policy
/// softmax SGD does not show this ordering: it dilutes the verifier's
/// update across all acceptable outputs, which slows mass concentration.
fn steps_to_threshold(
    world: &World,
    arm: MetaArm,
    cfg: &MetaLevelConfig,
    seed: u64,
) -> Result<usize, ExpError> {
    let ny = world.ny();
    let mut policy = Policy::uniform(world.nq(), ny);
    let mut rng = seed::rng(seed, 0);
    for step in 1..=cfg.max_steps {
        let mut accepted = Dataset::default();
        for _ in 0..cfg.samples_per_iter {
            let y = rng.random_range(0..ny);
            let keep = match arm {
                MetaArm::Verifier => world.accepts(0, 0, y)?,
                MetaArm::InstanceTarget => y == 0,
            };
            if keep {
                accepted.records.push(Record {
                    q: 0,
                    y,
                    weight: 1.0,
                    provenance: Provenance::Retained,
                });
            }
        }
        for r in &accepted.records {
            policy.bump_logit(r.q, r.y, cfg.learning_rate)?;
        }
        let (_, accuracy, _) = loops::policy_metrics(world, 0, &policy)?;
        if accuracy >= cfg.accuracy_threshold {
            return Ok(step);
        }
    }
    Ok(cfg.max_steps + 1)
}

pub fn exp_meta_level(
    cfg: &MetaLevelConfig,
    digest: &str,
    master_seed: u64,
) -> Result<ExperimentReport, ExpError> {
    cfg.validate()?;
    let mut rep = Reporter::new("exp_meta_level", digest, master_seed);
    let mut info_table = Table::new(
        "meta_information",
        &[
            "m",
            "bits_verifier",
            "bits_instance_target",
            "h2_one_over_m",
            "log2_m",
            "within_class_entropy",
        ],
    );
    let mut steps_table = Table::new(
        "steps_to_threshold",
        &["m", "seed", "steps_verifier", "steps_instance_target"],
    );

    let mut max_info_err = 0.0f64;
    for &m in &cfg.m_values {
        let world = uniform_set_world(cfg.ny, m)?;
        let bits_high = per_interaction_bits(&world, &SignalSpec::Verifier)?;
        let bits_low = per_interaction_bits(&world, &SignalSpec::InstanceTarget { target: 0 })?;
        let expect_high = prob::binary_entropy(m as f64 / cfg.ny as f64)?.value();
        let expect_low = prob::binary_entropy(1.0 / cfg.ny as f64)?.value();
        max_info_err = max_info_err
            .max((bits_high - expect_high).abs())
            .max((bits_low - expect_low).abs());
        let uniform = vec![1.0 / cfg.ny as f64; cfg.ny];
        let partition = world.acceptance_partition(0, 0)?;
        let wce = world::within_class_entropy(&uniform, &partition, 0)?.value();
        info_table.rows.push(vec![
            m.to_string(),
            sig12(bits_high),
            sig12(bits_low),
            sig12(prob::binary_entropy(1.0 / m as f64)?.value()),
            sig12((m as f64).log2()),
            sig12(wce),
        ]);
    }
    rep.check_le("per-interaction bits match closed forms", max_info_err, 1e-12);

    let mut violations = 0usize;
    let mut compared = 0usize;
    for &m in cfg.m_values.iter().filter(|&&m| [4, 8, 16].contains(&m)) {
        let world = uniform_set_world(cfg.ny, m)?;
        for i in 0..cfg.seeds {
            let s = seed::derive(master_seed, (m * 1000 + i) as u64);
            rep.report.seeds.push(s);
            let high = steps_to_threshold(&world, MetaArm::Verifier, cfg, s)?;
            let low = steps_to_threshold(&world, MetaArm::InstanceTarget, cfg, s)?;
            steps_table.rows.push(vec![
                m.to_string(),
                i.to_string(),
                high.to_string(),
                low.to_string(),
            ]);
            compared += 1;
            if high > low {
                violations += 1;
            }
        }
    }
    rep.metric("step_order_comparisons", compared as f64);
    rep.check(
        "verifier never slower than instance target",
        "violations == 0",
        violations as f64,
        violations == 0,
    );
    rep.table(info_table);
    rep.table(steps_table);
    rep.finish()
}

pub fn exp_diversity(
    cfg: &DiversityConfig,
    digest: &str,
    master_seed: u64,
) -> Result<ExperimentReport, ExpError> {
    cfg.validate()?;
    let h = cfg.hypotheses;
    let bs = cfg.block_size;
    let ny = h * bs;
    // h competing hypotheses; hypothesis x accepts exactly block x
    let world = World::new(
        (0..h).map(|i| format!("x{i}")).collect(),
        vec![1.0 / h as f64; h],
        vec!["q0".into()],
        vec![1.0],
        (0..ny).map(|i| format!("y{i}")).collect(),
        (0..h)
            .map(|x| (x * bs..(x + 1) * bs).collect())
            .collect(),
    )?;
    let partition = Partition::new(
        (0..h).map(|b| (b * bs..(b + 1) * bs).collect()).collect(),
        ny,
    )?;
    let mut rep = Reporter::new("exp_diversity", digest, master_seed);

    let mut measurable = true;
    for x in 0..h {
        let table = signals::signal_table(&SignalSpec::Verifier, None, &world, x)?;
        measurable &= world::is_pi_measurable(&table, std::slice::from_ref(&partition), 1e-12)?;
    }
    rep.check(
        "verifier block-measurable for every hypothesis",
        "all true",
        measurable as u8 as f64,
        measurable,
    );

    // probe block 0, repeat it, then blocks 1..h-1; the last block is
    // already determined by the others
    let mut probes = vec![0usize, 0];
    probes.extend((1..h).map(|b| b * bs));
    let mut joint = JointTable::from_fn(vec![("X".into(), h)], |idx| world.x_prior[idx[0]])?;
    let mut observed_vars: Vec<String> = Vec::new();
    let mut incrementals = Vec::with_capacity(probes.len());
    let mut table = Table::new("incremental_bits", &["obs", "y", "kind", "bits"]);
    for (i, &y) in probes.iter().enumerate() {
        let name = format!("S{i}");
        let verdicts: Vec<usize> = (0..h)
            .map(|x| world.accepts(x, 0, y).map(|b| b as usize))
            .collect::<Result<_, _>>()?;
        joint = joint.augment_deterministic(&name, 2, |idx| verdicts[idx[0]])?;
        let inc = if observed_vars.is_empty() {
            joint.mutual_info(&["X"], &[&name])?.value()
        } else {
            let given: Vec<&str> = observed_vars.iter().map(String::as_str).collect();
            joint.cond_mutual_info(&["X"], &[&name], &given)?.value()
        };
        let kind = match i {
            0 => "first",
            1 => "repeat",
            i if i == probes.len() - 1 => "determined",
            _ => "fresh-block",
        };
        table
            .rows
            .push(vec![i.to_string(), y.to_string(), kind.into(), sig12(inc)]);
        incrementals.push((kind, inc));
        observed_vars.push(name);
    }
    for (i, (kind, inc)) in incrementals.iter().enumerate() {
        match *kind {
            "repeat" | "determined" => {
                rep.check_le(&format!("obs {i} ({kind}): zero bits"), *inc, 1e-12)
            }
            _ => rep.check_ge(&format!("obs {i} ({kind}): fresh bits"), *inc, 1e-6),
        }
    }
    rep.table(table);
    rep.finish()
}

/// Rubric world: 32 outputs, 5 rubrics, 8 acceptable. Each unacceptable
/// output fails exactly one rubric, spread round-robin.
pub fn rubric_world() -> Result<World, WorldError> {
    let (ny, m, nr) = (32usize, 8usize, 5usize);
    let rubrics = (0..nr)
        .map(|r| {
            world::Rubric::new((0..ny).map(|y| y < m || (y - m) % nr != r).collect())
        })
        .collect();
    World::from_rubrics(
        vec!["x0".into()],
        vec![1.0],
        vec!["q0".into()],
        vec![1.0],
        (0..ny).map(|i| format!("y{i}")).collect(),
        rubrics,
    )
}

pub fn exp_noise_robustness(
    cfg: &NoiseRobustnessConfig,
    digest: &str,
    master_seed: u64,
) -> Result<ExperimentReport, ExpError> {
    cfg.validate()?;
    let world = rubric_world()?;
    let ny = world.ny();
    let mut rep = Reporter::new("exp_noise_robustness", digest, master_seed);

    let noisy = SignalSpec::NoisyRubricJudge {
        flip_prob: cfg.flip_prob,
    };
    let mut rng = seed::rng(master_seed, 0);
    let pairs: Vec<(usize, usize, usize)> = (0..cfg.consistency_pairs)
        .map(|_| (0, 0, rng.random_range(0..ny)))
        .collect();
    let consistency =
        signals::consistency_rate(&noisy, &world, &pairs, cfg.consistency_reps, &mut rng)?;
    rep.metric("consistency_rate", consistency);
    rep.check_le(
        "consistency calibrated to 24%",
        (consistency - 0.24).abs(),
        0.02,
    );

    // biased judge: always-accept overrides on the first unacceptable
    // outputs, count matched (ceiling) to the noisy judge's total
    // verdict-flip mass
    let noisy_table = signals::signal_table(&noisy, None, &world, 0)?;
    let mut flip_mass = 0.0;
    for y in 0..ny {
        let accept = noisy_table.rows[y][1];
        flip_mass += if world.accepts(0, 0, y)? {
            1.0 - accept
        } else {
            accept
        };
    }
    let override_count = flip_mass.ceil() as usize;
    rep.metric("verdict_flip_mass", flip_mass);
    rep.metric("override_count", override_count as f64);
    let overrides: Vec<(usize, bool)> = (0..ny)
        .filter(|&y| !world.accepts(0, 0, y).unwrap_or(false))
        .take(override_count)
        .map(|y| (y, true))
        .collect();
    let biased = SignalSpec::BiasedJudge { overrides };

    let arms: [(&str, SignalSpec); 3] = [
        ("clean", SignalSpec::Verifier),
        ("noisy", noisy.clone()),
        ("biased", biased),
    ];
    let mut finals: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut table = Table::new("arm_final_accuracy", &["arm", "seed", "final_accuracy"]);
    for i in 0..cfg.seeds {
        let s = seed::derive(master_seed, (i + 1) as u64);
        rep.report.seeds.push(s);
        for (arm, spec) in &arms {
            let config = LoopConfig {
                mode: LoopMode::Open,
                iterations: cfg.iterations,
                samples_per_iter: cfg.group_size,
                trainer: TrainerKind::Rlvr,
                signal: Some(spec.clone()),
                mix_in_real: 0.0,
                learning_rate: cfg.learning_rate,
                group_size: cfg.group_size,
                seed: s,
            };
            let traj = loops::run_loop(&world, 0, &config)?;
            let acc = traj.final_record().accuracy;
            table
                .rows
                .push(vec![arm.to_string(), i.to_string(), sig12(acc)]);
            finals.entry(arm).or_default().push(acc);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let clean = mean(&finals["clean"]);
    let noisy_acc = mean(&finals["noisy"]);
    let biased_acc = mean(&finals["biased"]);
    rep.metric("clean_mean_accuracy", clean);
    rep.metric("noisy_mean_accuracy", noisy_acc);
    rep.metric("biased_mean_accuracy", biased_acc);
    rep.check_ge("noisy arm close to clean", noisy_acc, clean - cfg.delta);
    rep.check_le(
        "biased arm falls short",
        biased_acc,
        clean - 2.0 * cfg.delta,
    );
    rep.table(table);
    rep.finish()
}

/// Exact efficiency split of the pair-corpus training signal at the given
/// tag-label correlation: Y = (tag, content), S = label.
fn hacking_eta(rho: f64, reliability: f64) -> Result<(f64, f64), ExpError> {
    let joint = JointTable::from_fn(
        vec![("Q".into(), 1), ("Y".into(), 4), ("S".into(), 2)],
        |idx| {
            let (t, c, label) = (idx[1] / 2, idx[1] % 2, idx[2]);
            let pt = if t == label {
                (1.0 + rho) / 2.0
            } else {
                (1.0 - rho) / 2.0
            };
            let pc = if c == label {
                reliability
            } else {
                1.0 - reliability
            };
            0.5 * pt * pc
        },
    )?;
    let spurious = Partition::new(vec![vec![0, 1], vec![2, 3]], 4)?;
    let correctness = Partition::new(vec![vec![0, 2], vec![1, 3]], 4)?;
    let d_spur =
        world::decompose_supervision(&joint, "Q", "Y", "S", std::slice::from_ref(&spurious))?;
    let d_corr =
        world::decompose_supervision(&joint, "Q", "Y", "S", std::slice::from_ref(&correctness))?;
    Ok((world::eta(&d_spur)?, world::eta(&d_corr)?))
}

pub fn exp_reward_hacking(
    cfg: &RewardHackingConfig,
    digest: &str,
    master_seed: u64,
) -> Result<ExperimentReport, ExpError> {
    cfg.validate()?;
    // 8 outputs, first 4 correct; surface tag split inside both halves so
    // every (correctness, tag) cell is realizable
    let world = uniform_set_world(8, 4)?;
    let feature = SpuriousFeature {
        tags: vec![1, 1, 0, 0, 1, 1, 0, 0],
    };
    let mut rep = Reporter::new("exp_reward_hacking", digest, master_seed);
    let mut curves = Table::new(
        "training_curves",
        &["rho", "step", "training_reward", "heldout_accuracy"],
    );

    // held-out distribution: tag decorrelated, content at its reliability
    let heldout_accuracy = |policy: &Policy| -> Result<f64, ExpError> {
        let mut acc = 0.0;
        for label in 0..2usize {
            for t in 0..2usize {
                for c in 0..2usize {
                    let pc = if c == label {
                        cfg.content_reliability
                    } else {
                        1.0 - cfg.content_reliability
                    };
                    acc += 0.25 * pc * policy.probs(t * 2 + c)?[label];
                }
            }
        }
        Ok(acc)
    };

    let mut end_heldout = BTreeMap::new();
    let plateau_start = ((cfg.steps as f64 * cfg.plateau_fraction).ceil() as usize).max(1);
    for (rho_idx, rho) in [1.0f64, 0.0].into_iter().enumerate() {
        let mut reward_curve = vec![0.0; cfg.steps + 1];
        let mut heldout_curve = vec![0.0; cfg.steps + 1];
        for i in 0..cfg.seeds {
            let s = seed::derive(master_seed, (rho_idx * 10_000 + i) as u64);
            rep.report.seeds.push(s);
            let mut rng = seed::rng(s, 0);
            let pairs = signals::generate_spurious_pairs(
                &world,
                0,
                0,
                &feature,
                cfg.train_pairs,
                rho,
                &mut rng,
            )?;
            // counts[feature q][label]; q = tag*2 + content
            let mut counts = [[0usize; 2]; 4];
            for p in &pairs {
                let flip = rng.random::<f64>() >= cfg.content_reliability;
                let c = (p.label ^ flip) as usize;
                counts[p.tag * 2 + c][p.label as usize] += 1;
            }
            let dataset = Dataset {
                records: (0..4)
                    .flat_map(|q| (0..2).map(move |l| (q, l)))
                    .filter(|&(q, l)| counts[q][l] > 0)
                    .map(|(q, l)| Record {
                        q,
                        y: l,
                        weight: counts[q][l] as f64,
                        provenance: Provenance::Real,
                    })
                    .collect(),
            };
            let total = cfg.train_pairs as f64;
            let mut policy = Policy::uniform(4, 2);
            for step in 0..=cfg.steps {
                if step > 0 {
                    learner::sft_step(&mut policy, &dataset, cfg.learning_rate)?;
                }
                let mut reward = 0.0;
                for q in 0..4 {
                    let probs = policy.probs(q)?;
                    for l in 0..2 {
                        reward += counts[q][l] as f64 / total * probs[l];
                    }
                }
                reward_curve[step] += reward / cfg.seeds as f64;
                heldout_curve[step] += heldout_accuracy(&policy)? / cfg.seeds as f64;
            }
        }
        for step in 0..=cfg.steps {
            curves.rows.push(vec![
                format!("{rho}"),
                step.to_string(),
                sig12(reward_curve[step]),
                sig12(heldout_curve[step]),
            ]);
        }
        if rho == 1.0 {
            let rise = reward_curve[cfg.steps] - reward_curve[plateau_start];
            rep.check(
                "confounded: training reward keeps rising",
                "> 0.01",
                rise,
                rise > 0.01,
            );
            let anchor = heldout_curve[plateau_start];
            let max_dev = heldout_curve[plateau_start..]
                .iter()
                .map(|v| (v - anchor).abs())
                .fold(0.0f64, f64::max);
            rep.check_le(
                "confounded: held-out accuracy plateaus",
                max_dev,
                cfg.plateau_band,
            );
        }
        end_heldout.insert(rho_idx, heldout_curve[cfg.steps]);
        rep.metric(
            &format!("heldout_final_rho{}", if rho_idx == 0 { "1" } else { "0" }),
            heldout_curve[cfg.steps],
        );
    }
    rep.check_ge(
        "decorrelated corpus wins held-out",
        end_heldout[&1] - end_heldout[&0],
        0.1,
    );

    let (eta_spur, eta_corr) = hacking_eta(1.0, cfg.content_reliability)?;
    rep.metric("eta_spurious", eta_spur);
    rep.metric("eta_correctness", eta_corr);
    rep.check(
        "spurious partition more efficient",
        "eta_spurious > eta_correctness",
        eta_spur - eta_corr,
        eta_spur > eta_corr,
    );
    rep.table(curves);
    rep.finish()
}

pub fn exp_judge_drift(
    cfg: &JudgeDriftConfig,
    digest: &str,
    master_seed: u64,
) -> Result<ExperimentReport, ExpError> {
    cfg.validate()?;
    // fixed evaluation set: every output of a 12-output world, held constant
    let world = uniform_set_world(12, 4)?;
    let scores: Vec<f64> = (0..world.ny())
        .map(|y| signals::judge_score(&world, 0, 0, y))
        .collect::<Result<_, _>>()?;
    let mut rep = Reporter::new("exp_judge_drift", digest, master_seed);
    let mut table = Table::new("drift", &["t", "threshold", "acceptance_rate"]);

    let run = |kappa: f64| -> (Vec<f64>, Vec<f64>, f64) {
        let mut state = SignalSpec::DriftingJudge {
            kappa,
            init_threshold: 0.0,
        }
        .initial_state()
        .expect("drifting judge is stateful");
        let mut rates = Vec::with_capacity(cfg.iterations);
        let mut taus = Vec::with_capacity(cfg.iterations);
        let mut max_score_dev = 0.0f64;
        for _ in 0..cfg.iterations {
            // contract: the evaluated outputs never change between steps
            for (y, &s0) in scores.iter().enumerate() {
                let s = signals::judge_score(&world, 0, 0, y).expect("score");
                max_score_dev = max_score_dev.max((s - s0).abs());
            }
            let before = state.threshold;
            state = signals::drift_step(kappa, &state, &scores);
            let rate = scores.iter().filter(|&&s| s > before).count() as f64
                / scores.len() as f64;
            taus.push(before);
            rates.push(rate);
        }
        (taus, rates, max_score_dev)
    };

    let (taus, rates, score_dev) = run(cfg.kappa);
    for (t, (tau, rate)) in taus.iter().zip(&rates).enumerate() {
        table
            .rows
            .push(vec![t.to_string(), sig12(*tau), sig12(*rate)]);
    }
    let max_increase = rates
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    rep.check_le("acceptance non-increasing", max_increase, 0.0);
    rep.check(
        "final acceptance below maximum",
        &format!("< {}", cfg.final_rate_max),
        *rates.last().unwrap(),
        *rates.last().unwrap() < cfg.final_rate_max,
    );
    rep.check_le("evaluation set held constant", score_dev, 0.0);

    let (_, frozen_rates, _) = run(0.0);
    let drift0 = frozen_rates
        .iter()
        .map(|r| (r - frozen_rates[0]).abs())
        .fold(0.0f64, f64::max);
    rep.check_le("kappa = 0 leaves acceptance constant", drift0, 0.0);
    rep.metric("final_threshold", *taus.last().unwrap());
    rep.metric("final_acceptance", *rates.last().unwrap());
    rep.table(table);
    rep.finish()
}

pub fn exp_generator_evaluator(
    cfg: &GeneratorEvaluatorConfig,
    digest: &str,
    master_seed: u64,
) -> Result<ExperimentReport, ExpError> {
    cfg.validate()?;
    let world = uniform_set_world(20, 8)?;
    let mut rep = Reporter::new("exp_generator_evaluator", digest, master_seed);
    let mut table = Table::new(
        "paired_arms",
        &["seed", "fixed_accuracy", "comoving_accuracy", "fixed_acceptance", "comoving_acceptance"],
    );
    let mut wins = 0usize;
    let mut fixed_rates = 0.0;
    let mut comoving_rates = 0.0;
    for i in 0..cfg.seeds {
        let s = seed::derive(master_seed, i as u64);
        rep.report.seeds.push(s);
        let fixed = loops::generator_evaluator_run(
            &world,
            0,
            Evaluator::FixedVerifier,
            cfg.iterations,
            cfg.samples_per_iter,
            cfg.learning_rate,
            s,
        )?;
        let comoving = loops::generator_evaluator_run(
            &world,
            0,
            Evaluator::CoMovingSelfJudge,
            cfg.iterations,
            cfg.samples_per_iter,
            cfg.learning_rate,
            s,
        )?;
        let fa = fixed.final_record().accuracy;
        let ca = comoving.final_record().accuracy;
        if fa > ca {
            wins += 1;
        }
        let mean_rate = |t: &loops::Trajectory| {
            let rates: Vec<f64> = t.records.iter().filter_map(|r| r.acceptance_rate).collect();
            rates.iter().sum::<f64>() / rates.len().max(1) as f64
        };
        let fr = mean_rate(&fixed);
        let cr = mean_rate(&comoving);
        fixed_rates += fr / cfg.seeds as f64;
        comoving_rates += cr / cfg.seeds as f64;
        table.rows.push(vec![
            i.to_string(),
            sig12(fa),
            sig12(ca),
            sig12(fr),
            sig12(cr),
        ]);
    }
    rep.metric("fixed_wins", wins as f64);
    rep.check_ge(
        "fixed evaluator wins the pairing",
        wins as f64,
        cfg.min_wins as f64,
    );
    rep.check_ge(
        "self-approval is easier",
        comoving_rates - fixed_rates,
        0.0,
    );

    let s = seed::derive(master_seed, 777);
    let a = loops::generator_evaluator_run(&world, 0, Evaluator::FixedVerifier, 0, 10, 0.5, s)?;
    let b =
        loops::generator_evaluator_run(&world, 0, Evaluator::CoMovingSelfJudge, 0, 10, 0.5, s)?;
    let t0_gap = (a.final_record().output_entropy - b.final_record().output_entropy).abs()
        + (a.final_record().accuracy - b.final_record().accuracy).abs();
    rep.check_le("arms identical at T = 0", t0_gap, 0.0);
    rep.table(table);
    rep.finish()
}
