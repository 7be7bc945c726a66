//! Task worlds: a finite source space X, prompts Q, outputs Y, an acceptance
//! relation A(x, q), optional rubric predicates, and the partition machinery
//! used to split supervision information into task-relevant and within-class
//! components.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::prob::{self, Bits, Channel, JointTable, ProbError};

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("prior not normalized: sum = {0}")]
    PriorNotNormalized(f64),
    #[error("unknown label index {index} for {axis}")]
    UnknownLabel { axis: &'static str, index: usize },
    #[error("acceptance set for (x={x}, q={q}) references output {y} outside Y")]
    BadAcceptanceEntry { x: usize, q: usize, y: usize },
    #[error("rubric conjunction disagrees with acceptance at (x={x}, q={q}, y={y})")]
    RubricMismatch { x: usize, q: usize, y: usize },
    #[error("partition blocks must be disjoint and cover Y")]
    BadPartition,
    #[error("unknown output index {0}")]
    UnknownOutput(usize),
    #[error("block {0} has zero probability under the conditional")]
    ZeroProbabilityBlock(usize),
    #[error("no partition supplied for prompt {0}")]
    MissingPartition(usize),
    #[error("signal table shape does not match (Q, Y): {0}")]
    ShapeMismatch(String),
    #[error("total supervision information {0} is below the efficiency floor")]
    UndefinedEfficiency(f64),
    #[error(transparent)]
    Prob(#[from] ProbError),
}

/// One boolean predicate over (x, q, y), stored as a dense truth table.
#[derive(Debug, Clone)]
pub struct Rubric {
    truth: Vec<bool>,
}

impl Rubric {
    pub fn new(truth: Vec<bool>) -> Self {
        Rubric { truth }
    }
}

/// Finite task source with acceptance structure.
#[derive(Debug, Clone)]
pub struct World {
    pub x_values: Vec<String>,
    pub x_prior: Vec<f64>,
    pub q_values: Vec<String>,
    pub q_dist: Vec<f64>,
    pub y_values: Vec<String>,
    acceptance: Vec<BTreeSet<usize>>, // indexed x * nq + q
    rubrics: Vec<Rubric>,
}

fn check_prior(p: &[f64]) -> Result<(), WorldError> {
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || p.iter().any(|&v| v < 0.0) {
        return Err(WorldError::PriorNotNormalized(sum));
    }
    Ok(())
}

impl World {
    pub fn new(
        x_values: Vec<String>,
        x_prior: Vec<f64>,
        q_values: Vec<String>,
        q_dist: Vec<f64>,
        y_values: Vec<String>,
        acceptance: Vec<BTreeSet<usize>>,
    ) -> Result<Self, WorldError> {
        check_prior(&x_prior)?;
        check_prior(&q_dist)?;
        if acceptance.len() != x_values.len() * q_values.len() {
            return Err(WorldError::ShapeMismatch(format!(
                "expected {} acceptance entries, got {}",
                x_values.len() * q_values.len(),
                acceptance.len()
            )));
        }
        for (i, set) in acceptance.iter().enumerate() {
            for &y in set {
                if y >= y_values.len() {
                    return Err(WorldError::BadAcceptanceEntry {
                        x: i / q_values.len(),
                        q: i % q_values.len(),
                        y,
                    });
                }
            }
        }
        Ok(World {
            x_values,
            x_prior,
            q_values,
            q_dist,
            y_values,
            acceptance,
            rubrics: Vec::new(),
        })
    }

    /// Builds a world whose acceptance is exactly the conjunction of the
    /// given rubric predicates.
    pub fn from_rubrics(
        x_values: Vec<String>,
        x_prior: Vec<f64>,
        q_values: Vec<String>,
        q_dist: Vec<f64>,
        y_values: Vec<String>,
        rubrics: Vec<Rubric>,
    ) -> Result<Self, WorldError> {
        let (nx, nq, ny) = (x_values.len(), q_values.len(), y_values.len());
        for r in &rubrics {
            if r.truth.len() != nx * nq * ny {
                return Err(WorldError::ShapeMismatch(format!(
                    "rubric table has {} entries, expected {}",
                    r.truth.len(),
                    nx * nq * ny
                )));
            }
        }
        let mut acceptance = Vec::with_capacity(nx * nq);
        for x in 0..nx {
            for q in 0..nq {
                let set: BTreeSet<usize> = (0..ny)
                    .filter(|&y| rubrics.iter().all(|r| r.truth[(x * nq + q) * ny + y]))
                    .collect();
                acceptance.push(set);
            }
        }
        let mut world = World::new(x_values, x_prior, q_values, q_dist, y_values, acceptance)?;
        world.rubrics = rubrics;
        Ok(world)
    }

    pub fn nx(&self) -> usize {
        self.x_values.len()
    }
    pub fn nq(&self) -> usize {
        self.q_values.len()
    }
    pub fn ny(&self) -> usize {
        self.y_values.len()
    }
    pub fn num_rubrics(&self) -> usize {
        self.rubrics.len()
    }

    fn check_xq(&self, x: usize, q: usize) -> Result<(), WorldError> {
        if x >= self.nx() {
            return Err(WorldError::UnknownLabel { axis: "x", index: x });
        }
        if q >= self.nq() {
            return Err(WorldError::UnknownLabel { axis: "q", index: q });
        }
        Ok(())
    }

    pub fn acceptance_set(&self, x: usize, q: usize) -> Result<&BTreeSet<usize>, WorldError> {
        self.check_xq(x, q)?;
        Ok(&self.acceptance[x * self.nq() + q])
    }

    pub fn accepts(&self, x: usize, q: usize, y: usize) -> Result<bool, WorldError> {
        if y >= self.ny() {
            return Err(WorldError::UnknownOutput(y));
        }
        Ok(self.acceptance_set(x, q)?.contains(&y))
    }

    pub fn rubric_truth(&self, r: usize, x: usize, q: usize, y: usize) -> bool {
        self.rubrics[r].truth[(x * self.nq() + q) * self.ny() + y]
    }

    /// Vector of rubric truth values for one (x, q, y).
    pub fn rubric_vector(&self, x: usize, q: usize, y: usize) -> Vec<bool> {
        (0..self.rubrics.len())
            .map(|r| self.rubric_truth(r, x, q, y))
            .collect()
    }

    /// Accept/reject partition for a context: block 0 is the acceptable set,
    /// block 1 its complement. Empty or full acceptance yields a flagged
    /// single-block partition rather than an error.
    pub fn acceptance_partition(&self, x: usize, q: usize) -> Result<Partition, WorldError> {
        let acc = self.acceptance_set(x, q)?.clone();
        let ny = self.ny();
        if acc.is_empty() || acc.len() == ny {
            return Partition::new_flagged(vec![(0..ny).collect()], ny, true);
        }
        let rest: Vec<usize> = (0..ny).filter(|y| !acc.contains(y)).collect();
        Partition::new(vec![acc.into_iter().collect(), rest], ny)
    }

    /// Partition of Y by rubric truth vector for a context. Two outputs share
    /// a block iff every rubric judges them identically.
    pub fn rubric_partition(&self, x: usize, q: usize) -> Result<Partition, WorldError> {
        self.check_xq(x, q)?;
        let ny = self.ny();
        let mut blocks: Vec<(Vec<bool>, Vec<usize>)> = Vec::new();
        for y in 0..ny {
            let key = self.rubric_vector(x, q, y);
            match blocks.iter_mut().find(|(k, _)| *k == key) {
                Some((_, members)) => members.push(y),
                None => blocks.push((key, vec![y])),
            }
        }
        let degenerate = blocks.len() == 1;
        Partition::new_flagged(blocks.into_iter().map(|(_, m)| m).collect(), ny, degenerate)
    }
}

/// Disjoint blocks covering the output space.
#[derive(Debug, Clone)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
    /// block index per output, for O(1) quotient lookup
    index: Vec<usize>,
    pub degenerate: bool,
}

impl Partition {
    pub fn new(blocks: Vec<Vec<usize>>, ny: usize) -> Result<Self, WorldError> {
        Self::new_flagged(blocks, ny, false)
    }

    pub fn new_flagged(
        blocks: Vec<Vec<usize>>,
        ny: usize,
        degenerate: bool,
    ) -> Result<Self, WorldError> {
        let mut index = vec![usize::MAX; ny];
        let mut seen = 0usize;
        for (k, block) in blocks.iter().enumerate() {
            for &y in block {
                if y >= ny || index[y] != usize::MAX {
                    return Err(WorldError::BadPartition);
                }
                index[y] = k;
                seen += 1;
            }
        }
        if seen != ny || blocks.is_empty() || blocks.iter().any(|b| b.is_empty()) {
            return Err(WorldError::BadPartition);
        }
        Ok(Partition {
            blocks,
            index,
            degenerate,
        })
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Block index of an output.
    pub fn quotient(&self, y: usize) -> Result<usize, WorldError> {
        self.index
            .get(y)
            .copied()
            .ok_or(WorldError::UnknownOutput(y))
    }
}

/// H(Y | Y in C_k) in bits for a conditional output distribution.
pub fn within_class_entropy(
    conditional: &[f64],
    partition: &Partition,
    block: usize,
) -> Result<Bits, WorldError> {
    let members = partition
        .blocks
        .get(block)
        .ok_or(WorldError::ZeroProbabilityBlock(block))?;
    let mass: f64 = members.iter().map(|&y| conditional[y]).sum();
    if mass <= prob::ZERO_PROB {
        return Err(WorldError::ZeroProbabilityBlock(block));
    }
    let renorm: Vec<f64> = members.iter().map(|&y| conditional[y] / mass).collect();
    Ok(prob::entropy(&renorm)?)
}

/// Exact split of I(Y;S|Q) into its between-block and within-block parts.
#[derive(Debug, Clone, Copy)]
pub struct DecompositionReport {
    pub total: Bits,
    pub task_relevant: Bits,
    pub within_class: Bits,
}

/// Splits the supervision information of a (Q, Y, S) joint along the
/// per-prompt partitions: total = I(Y;S|Q), task_relevant = I([Y];S|Q),
/// within_class = I(Y;S|[Y],Q). The three satisfy total = task_relevant +
/// within_class exactly (chain rule, [Y] being a function of (Q, Y)).
pub fn decompose_supervision(
    joint: &JointTable,
    q_var: &str,
    y_var: &str,
    s_var: &str,
    partitions: &[Partition],
) -> Result<DecompositionReport, WorldError> {
    let q_pos = joint.var_position(q_var)?;
    let y_pos = joint.var_position(y_var)?;
    let nq = joint.variables()[q_pos].1;
    if partitions.len() != nq {
        return Err(WorldError::MissingPartition(partitions.len()));
    }
    let kmax = partitions.iter().map(|p| p.num_blocks()).max().unwrap_or(1);
    let block_var = "__block";
    let augmented = joint.augment_deterministic(block_var, kmax, |idx| {
        partitions[idx[q_pos]].index[idx[y_pos]]
    })?;
    let total = augmented.cond_mutual_info(&[y_var], &[s_var], &[q_var])?;
    let task_relevant = augmented.cond_mutual_info(&[block_var], &[s_var], &[q_var])?;
    let within_class = augmented.cond_mutual_info(&[y_var], &[s_var], &[block_var, q_var])?;
    Ok(DecompositionReport {
        total,
        task_relevant,
        within_class,
    })
}

pub const ETA_FLOOR: f64 = 1e-10;

/// Task-relevant efficiency: task_relevant / total, clamped to [0, 1].
pub fn eta(report: &DecompositionReport) -> Result<f64, WorldError> {
    eta_with_floor(report, ETA_FLOOR)
}

pub fn eta_with_floor(report: &DecompositionReport, floor: f64) -> Result<f64, WorldError> {
    let total = report.total.value();
    if total <= floor {
        return Err(WorldError::UndefinedEfficiency(total));
    }
    Ok((report.task_relevant.value() / total).clamp(0.0, 1.0))
}

/// True iff the signal table P(S | Q, Y) depends on Y only through the
/// per-prompt partition block: rows within each block are identical.
pub fn is_pi_measurable(
    table: &Channel,
    partitions: &[Partition],
    tol: f64,
) -> Result<bool, WorldError> {
    if table.from_vars.len() != 2 {
        return Err(WorldError::ShapeMismatch(format!(
            "expected from_vars (Q, Y), got {} variables",
            table.from_vars.len()
        )));
    }
    let nq = table.from_vars[0].1;
    let ny = table.from_vars[1].1;
    if partitions.len() != nq {
        return Err(WorldError::MissingPartition(partitions.len()));
    }
    for (q, partition) in partitions.iter().enumerate() {
        if partition.index.len() != ny {
            return Err(WorldError::ShapeMismatch(format!(
                "partition for prompt {q} covers {} outputs, table has {ny}",
                partition.index.len()
            )));
        }
        for block in &partition.blocks {
            let first = &table.rows[q * ny + block[0]];
            for &y in &block[1..] {
                let row = &table.rows[q * ny + y];
                if first
                    .iter()
                    .zip(row)
                    .any(|(a, b)| (a - b).abs() > tol)
                {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}
