//! Exact small-scale loop analysis. The trained model is identified with the
//! empirical count vector of its training batch, so the state space is every
//! composition of n samples over |Y| outputs and all transition kernels are
//! multinomial rows that can be written down in closed form. Information
//! quantities then come from exact joint tables, no sampling anywhere.

use thiserror::Error;

use crate::par::{self, Parallelism};
use crate::prob::{Channel, JointTable, ProbError, ZERO_PROB};

#[derive(Debug, Error)]
pub enum ExactError {
    #[error("invalid finite loop spec: {0}")]
    InvalidSpec(String),
    #[error("enumeration budget exceeded: {0} cells (budget {1})")]
    BudgetExceeded(usize, usize),
    #[error(transparent)]
    Prob(#[from] ProbError),
}

/// Exogenous signal with law P(S | X) and a per-value reweighting of the
/// policy: after observing S = s the next batch is drawn from
/// policy(z) * filters[s], renormalized. An all-ones single-value filter
/// makes the signal vacuous and the loop closed.
#[derive(Debug, Clone)]
pub struct SignalModel {
    /// law[x][s]
    pub law: Vec<Vec<f64>>,
    /// filters[s][y], nonnegative weights
    pub filters: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionKind {
    /// next state is a fresh batch sampled from the current policy
    Resample,
    /// next state equals the current state; the bound must be tight
    Identity,
}

pub const DEFAULT_BUDGET: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct FiniteLoopSpec {
    pub x_prior: Vec<f64>,
    /// emissions[x][y]: the real data distribution P(Y | X)
    pub emissions: Vec<Vec<f64>>,
    /// batch size per iteration
    pub n_samples: usize,
    /// Laplace smoothing of the count-vector policy
    pub alpha: f64,
    pub iterations: usize,
    pub transition: TransitionKind,
    pub signal: Option<SignalModel>,
    /// cap on enumerated table cells
    pub budget: usize,
}

impl FiniteLoopSpec {
    pub fn closed(
        x_prior: Vec<f64>,
        emissions: Vec<Vec<f64>>,
        n_samples: usize,
        iterations: usize,
    ) -> Self {
        FiniteLoopSpec {
            x_prior,
            emissions,
            n_samples,
            alpha: 1.0,
            iterations,
            transition: TransitionKind::Resample,
            signal: None,
            budget: DEFAULT_BUDGET,
        }
    }

    pub fn ny(&self) -> usize {
        self.emissions.first().map_or(0, Vec::len)
    }

    fn validate(&self) -> Result<(), ExactError> {
        let bad = |m: &str| Err(ExactError::InvalidSpec(m.to_string()));
        if self.x_prior.is_empty() {
            return bad("empty x prior");
        }
        if (self.x_prior.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("x prior not normalized");
        }
        if self.emissions.len() != self.x_prior.len() {
            return bad("emissions rows must match x prior length");
        }
        let ny = self.ny();
        if ny == 0 {
            return bad("empty output space");
        }
        for row in &self.emissions {
            if row.len() != ny {
                return bad("ragged emissions");
            }
            if (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return bad("emission row not normalized");
            }
        }
        if self.n_samples == 0 {
            return bad("n_samples must be >= 1");
        }
        if self.alpha <= 0.0 {
            return bad("alpha must be positive");
        }
        if self.iterations == 0 {
            return bad("iterations must be >= 1");
        }
        if let Some(sig) = &self.signal {
            if sig.law.len() != self.x_prior.len() {
                return bad("signal law rows must match x prior length");
            }
            let ns = sig.law[0].len();
            if ns == 0 {
                return bad("signal with no values");
            }
            for row in &sig.law {
                if row.len() != ns {
                    return bad("ragged signal law");
                }
                if (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return bad("signal law row not normalized");
                }
            }
            if sig.filters.len() != ns {
                return bad("one filter per signal value required");
            }
            for f in &sig.filters {
                if f.len() != ny {
                    return bad("filter length must match output space");
                }
                if f.iter().any(|&w| w < 0.0) {
                    return bad("negative filter weight");
                }
            }
        }
        Ok(())
    }
}

/// Per-iteration exact information quantities, all in bits.
#[derive(Debug, Clone, Copy)]
pub struct IterInfo {
    pub t: usize,
    pub info_xz: f64,
    /// I(X; S | Z_t); None in closed mode
    pub info_xs_given_z: Option<f64>,
    /// slack of the step bound I(X;Z_{t+1}) <= I(X;Z_t) + I(X;S|Z_t);
    /// None for the final iterate (no step follows)
    pub bound_residual: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExactReport {
    pub state_count: usize,
    pub per_iter: Vec<IterInfo>,
}

/// All count vectors of length ny summing to n, in lexicographic order.
pub fn enumerate_states(ny: usize, n: usize) -> Vec<Vec<usize>> {
    let mut states = Vec::new();
    let mut current = vec![0usize; ny];
    fn rec(states: &mut Vec<Vec<usize>>, current: &mut Vec<usize>, pos: usize, left: usize) {
        if pos + 1 == current.len() {
            current[pos] = left;
            states.push(current.clone());
            return;
        }
        for c in 0..=left {
            current[pos] = c;
            rec(states, current, pos + 1, left - c);
        }
    }
    rec(&mut states, &mut current, 0, n);
    states
}

pub fn state_space_size(ny: usize, n: usize) -> usize {
    // C(n + ny - 1, ny - 1), computed incrementally to stay exact
    let mut result: u128 = 1;
    for i in 0..(ny - 1) as u128 {
        result = result * (n as u128 + i + 1) / (i + 1);
    }
    result.min(usize::MAX as u128) as usize
}

/// Laplace-smoothed policy a count-vector state induces.
pub fn state_policy(counts: &[usize], alpha: f64) -> Vec<f64> {
    let n: usize = counts.iter().sum();
    let denom = n as f64 + alpha * counts.len() as f64;
    counts.iter().map(|&c| (c as f64 + alpha) / denom).collect()
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut lf = vec![0.0; n + 1];
    for i in 1..=n {
        lf[i] = lf[i - 1] + (i as f64).ln();
    }
    lf
}

/// Multinomial pmf over every enumerated state, renormalized so the row sums
/// to exactly one.
fn multinomial_row(p: &[f64], states: &[Vec<usize>], n: usize, lf: &[f64]) -> Vec<f64> {
    let mut row: Vec<f64> = states
        .iter()
        .map(|counts| {
            let mut logp = lf[n];
            for (&c, &pi) in counts.iter().zip(p) {
                if c == 0 {
                    continue;
                }
                if pi <= ZERO_PROB {
                    return 0.0;
                }
                logp += c as f64 * pi.ln() - lf[c];
            }
            logp.exp()
        })
        .collect();
    let total: f64 = row.iter().sum();
    for v in &mut row {
        *v /= total;
    }
    row
}

fn reweighted(policy: &[f64], filter: &[f64]) -> Result<Vec<f64>, ExactError> {
    let mut w: Vec<f64> = policy.iter().zip(filter).map(|(&p, &f)| p * f).collect();
    let total: f64 = w.iter().sum();
    if total <= ZERO_PROB {
        return Err(ExactError::InvalidSpec(
            "filter annihilates a reachable policy".into(),
        ));
    }
    for v in &mut w {
        *v /= total;
    }
    Ok(w)
}

/// Exact per-iteration analysis of the described loop. Closed mode
/// propagates X -> Z_0 -> Z_1 -> ...; open mode inserts the signal channel
/// before each transition. Parallelism only affects wall time: transition
/// rows are built independently per state, so results are bitwise identical
/// across modes.
pub fn exact_loop_analysis(
    spec: &FiniteLoopSpec,
    mode: Parallelism,
) -> Result<ExactReport, ExactError> {
    spec.validate()?;
    let ny = spec.ny();
    let n = spec.n_samples;
    let nx = spec.x_prior.len();
    let nz = state_space_size(ny, n);
    let ns = spec.signal.as_ref().map_or(1, |s| s.filters.len());
    let peak_cells = nx
        .saturating_mul(nz)
        .saturating_mul(nz)
        .saturating_mul(ns);
    if nz > spec.budget || peak_cells > spec.budget {
        return Err(ExactError::BudgetExceeded(peak_cells.max(nz), spec.budget));
    }

    let states = enumerate_states(ny, n);
    debug_assert_eq!(states.len(), nz);
    let lf = ln_factorials(n);

    let prior = JointTable::new(vec![("X".into(), nx)], spec.x_prior.clone())?;
    let emission_rows = par::map(mode, &spec.emissions, |p| multinomial_row(p, &states, n, &lf));
    let emit = Channel::new(
        vec![("X".into(), nx)],
        vec![("Z".into(), nz)],
        emission_rows,
    )?;
    let mut joint = prior.compose(&emit)?; // over (X, Z)

    let policies: Vec<Vec<f64>> = states.iter().map(|s| state_policy(s, spec.alpha)).collect();

    // transition kernel rows, indexed by z (closed) or (z, s) (open)
    enum Kernel {
        Closed(Channel),
        Open(Channel, Channel), // signal X -> S, transition (Z, S) -> Z2
    }
    let kernel = match (&spec.signal, spec.transition) {
        (None, TransitionKind::Identity) => {
            Kernel::Closed(Channel::identity("Z", "Z2", nz)?)
        }
        (None, TransitionKind::Resample) => {
            let rows = par::map(mode, &policies, |p| multinomial_row(p, &states, n, &lf));
            Kernel::Closed(Channel::new(
                vec![("Z".into(), nz)],
                vec![("Z2".into(), nz)],
                rows,
            )?)
        }
        (Some(sig), transition) => {
            let signal_chan = Channel::new(
                vec![("X".into(), nx)],
                vec![("S".into(), ns)],
                sig.law.clone(),
            )?;
            let pairs: Vec<(usize, usize)> = (0..nz)
                .flat_map(|z| (0..ns).map(move |s| (z, s)))
                .collect();
            let rows = par::map(mode, &pairs, |&(z, s)| {
                if transition == TransitionKind::Identity {
                    let mut row = vec![0.0; nz];
                    row[z] = 1.0;
                    return Ok(row);
                }
                let p = reweighted(&policies[z], &sig.filters[s])?;
                Ok(multinomial_row(&p, &states, n, &lf))
            })
            .into_iter()
            .collect::<Result<Vec<_>, ExactError>>()?;
            let trans = Channel::new(
                vec![("Z".into(), nz), ("S".into(), ns)],
                vec![("Z2".into(), nz)],
                rows,
            )?;
            Kernel::Open(signal_chan, trans)
        }
    };

    let mut per_iter = Vec::with_capacity(spec.iterations + 1);
    let mut info_xz = joint.mutual_info(&["X"], &["Z"])?.value();
    for t in 0..spec.iterations {
        let (next_joint, info_xs, info_next) = match &kernel {
            Kernel::Closed(trans) => {
                let big = joint.compose(trans)?; // (X, Z, Z2)
                let info_next = big.mutual_info(&["X"], &["Z2"])?.value();
                (big.marginalize(&["X", "Z2"])?, None, info_next)
            }
            Kernel::Open(signal_chan, trans) => {
                let with_s = joint.compose(signal_chan)?; // (X, Z, S)
                let info_xs = with_s.cond_mutual_info(&["X"], &["S"], &["Z"])?.value();
                let big = with_s.compose(trans)?; // (X, Z, S, Z2)
                let info_next = big.mutual_info(&["X"], &["Z2"])?.value();
                (big.marginalize(&["X", "Z2"])?, Some(info_xs), info_next)
            }
        };
        let budget_t = info_xz + info_xs.unwrap_or(0.0);
        per_iter.push(IterInfo {
            t,
            info_xz,
            info_xs_given_z: info_xs,
            bound_residual: Some(budget_t - info_next),
        });
        let mut next_joint = next_joint;
        next_joint.rename_var("Z2", "Z")?;
        joint = next_joint;
        info_xz = info_next;
    }
    per_iter.push(IterInfo {
        t: spec.iterations,
        info_xz,
        info_xs_given_z: None,
        bound_residual: None,
    });
    Ok(ExactReport {
        state_count: nz,
        per_iter,
    })
}

/// A vacuous signal: one value, uniform law, all-ones filter. Attaching it
/// must reproduce the closed analysis exactly.
pub fn constant_signal(nx: usize, ny: usize) -> SignalModel {
    SignalModel {
        law: vec![vec![1.0]; nx],
        filters: vec![vec![1.0; ny]],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state_spec() -> FiniteLoopSpec {
        FiniteLoopSpec::closed(
            vec![0.5, 0.5],
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            4,
            6,
        )
    }

    #[test]
    fn state_enumeration_matches_formula() {
        for (ny, n) in [(2, 4), (3, 5), (4, 6), (5, 3)] {
            let states = enumerate_states(ny, n);
            assert_eq!(states.len(), state_space_size(ny, n));
            assert!(states.iter().all(|s| s.iter().sum::<usize>() == n));
            let mut sorted = states.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), states.len());
        }
    }

    #[test]
    fn closed_loop_monotone_and_tight_identity() {
        let report = exact_loop_analysis(&two_state_spec(), Parallelism::Auto).unwrap();
        let infos: Vec<f64> = report.per_iter.iter().map(|r| r.info_xz).collect();
        for w in infos.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "monotonicity violated: {w:?}");
        }
        for r in &report.per_iter {
            if let Some(res) = r.bound_residual {
                assert!(res >= -1e-9, "negative residual {res} at t={}", r.t);
            }
        }

        let mut id_spec = two_state_spec();
        id_spec.transition = TransitionKind::Identity;
        let report = exact_loop_analysis(&id_spec, Parallelism::Auto).unwrap();
        let first = report.per_iter[0].info_xz;
        for r in &report.per_iter {
            assert!((r.info_xz - first).abs() <= 1e-12);
            if let Some(res) = r.bound_residual {
                assert!(res.abs() <= 1e-12, "identity bound not tight: {res}");
            }
        }
    }

    #[test]
    fn constant_signal_reduces_to_closed() {
        let closed = exact_loop_analysis(&two_state_spec(), Parallelism::Auto).unwrap();
        let mut open_spec = two_state_spec();
        open_spec.signal = Some(constant_signal(2, 2));
        let open = exact_loop_analysis(&open_spec, Parallelism::Auto).unwrap();
        for (a, b) in closed.per_iter.iter().zip(&open.per_iter) {
            assert!((a.info_xz - b.info_xz).abs() <= 1e-12);
            if let Some(i) = b.info_xs_given_z {
                assert!(i.abs() <= 1e-12, "constant signal carries info: {i}");
            }
        }
    }

    #[test]
    fn informative_signal_injects_information() {
        let mut spec = FiniteLoopSpec::closed(
            vec![0.5, 0.5],
            vec![vec![0.6, 0.4], vec![0.4, 0.6]],
            4,
            8,
        );
        // signal reveals X with 10% noise; filters push the batch toward the
        // revealed side
        spec.signal = Some(SignalModel {
            law: vec![vec![0.9, 0.1], vec![0.1, 0.9]],
            filters: vec![vec![3.0, 1.0], vec![1.0, 3.0]],
        });
        let report = exact_loop_analysis(&spec, Parallelism::Auto).unwrap();
        let last = report.per_iter[report.per_iter.len() - 2];
        assert!(last.info_xs_given_z.unwrap() > 1e-3);
        for r in &report.per_iter {
            if let Some(res) = r.bound_residual {
                assert!(res >= -1e-9);
            }
        }
        // the open loop retains more information than its closed twin
        let mut closed_spec = spec.clone();
        closed_spec.signal = None;
        let closed = exact_loop_analysis(&closed_spec, Parallelism::Auto).unwrap();
        assert!(
            report.per_iter.last().unwrap().info_xz
                > closed.per_iter.last().unwrap().info_xz
        );
    }

    #[test]
    fn budget_enforced() {
        let mut spec = two_state_spec();
        spec.budget = 10;
        assert!(matches!(
            exact_loop_analysis(&spec, Parallelism::Auto),
            Err(ExactError::BudgetExceeded(_, 10))
        ));
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let mut spec = FiniteLoopSpec::closed(
            vec![0.3, 0.7],
            vec![vec![0.8, 0.15, 0.05], vec![0.1, 0.3, 0.6]],
            5,
            4,
        );
        spec.signal = Some(SignalModel {
            law: vec![vec![0.85, 0.15], vec![0.25, 0.75]],
            filters: vec![vec![2.0, 1.0, 1.0], vec![1.0, 1.0, 2.0]],
        });
        let a = exact_loop_analysis(&spec, Parallelism::Auto).unwrap();
        let b = exact_loop_analysis(&spec, Parallelism::Sequential).unwrap();
        for (ra, rb) in a.per_iter.iter().zip(&b.per_iter) {
            assert_eq!(ra.info_xz.to_bits(), rb.info_xz.to_bits());
            assert_eq!(
                ra.info_xs_given_z.map(f64::to_bits),
                rb.info_xs_given_z.map(f64::to_bits)
            );
        }
    }

    #[test]
    fn first_iterate_info_bounded_by_data() {
        // I(X; Z_0) <= H(X); with a deterministic emission and n = 1 it is
        // exactly H(X)
        let spec = FiniteLoopSpec::closed(
            vec![0.5, 0.5],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            1,
            1,
        );
        let report = exact_loop_analysis(&spec, Parallelism::Auto).unwrap();
        assert!((report.per_iter[0].info_xz - 1.0).abs() <= 1e-12);
    }
}
