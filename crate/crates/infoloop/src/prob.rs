//! Exact probability tables, information measures, and channel composition
//! over finite spaces. Everything here is dense and exact up to f64
//! rounding; there is no sampling and no estimation.
//!
//! All information quantities are reported in bits (log base 2).

use thiserror::Error;

/// Probabilities below this are treated as exact zeros in entropy sums.
pub const ZERO_PROB: f64 = 1e-15;

/// Default cap on the number of cells in a dense table.
pub const DEFAULT_CELL_CAP: usize = 10_000_000;

/// Shared numeric tolerances. `identity` guards algebraic identities,
/// `slack` guards inequalities, `normalization` guards input sums.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub identity: f64,
    pub slack: f64,
    pub normalization: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            identity: 1e-12,
            slack: 1e-9,
            normalization: 1e-9,
        }
    }
}

#[derive(Debug, Error)]
pub enum ProbError {
    #[error("probability vector not normalized: sum = {0}")]
    NotNormalized(f64),
    #[error("negative probability entry: {0}")]
    NegativeEntry(f64),
    #[error("value out of range: {0}")]
    OutOfRange(f64),
    #[error("unknown variable: {0}")]
    UnknownVariable(String),
    #[error("variable sets overlap on: {0}")]
    OverlappingSets(String),
    #[error("variable already present: {0}")]
    VariableClash(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("conditioning event has zero probability")]
    ZeroProbabilityEvent,
    #[error("table size {0} exceeds cell cap {1}")]
    CellCapExceeded(usize, usize),
    #[error("duplicate variable name: {0}")]
    DuplicateVariable(String),
    #[error("cardinality must be >= 1 for variable {0}")]
    EmptyVariable(String),
    #[error("information quantity below tolerance: {0}")]
    NegativeInformation(f64),
}

/// An information quantity in bits.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Bits(pub f64);

impl Bits {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Shannon entropy of a probability vector, in bits. `0 log 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<Bits, ProbError> {
    let mut sum = 0.0;
    for &x in p {
        if x < 0.0 {
            return Err(ProbError::NegativeEntry(x));
        }
        sum += x;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(ProbError::NotNormalized(sum));
    }
    Ok(Bits(entropy_unchecked(p)))
}

fn entropy_unchecked(p: &[f64]) -> f64 {
    let mut h = 0.0;
    for &x in p {
        if x > ZERO_PROB {
            h -= x * x.log2();
        }
    }
    // tiny negative residue from rounding snaps to zero
    if h < 0.0 && h > -1e-12 {
        0.0
    } else {
        h
    }
}

/// Binary entropy h2(x) in bits, with the endpoint convention h2(0) = h2(1) = 0.
pub fn binary_entropy(x: f64) -> Result<Bits, ProbError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(ProbError::OutOfRange(x));
    }
    if x <= ZERO_PROB || x >= 1.0 - ZERO_PROB {
        return Ok(Bits(0.0));
    }
    Ok(Bits(-x * x.log2() - (1.0 - x) * (1.0 - x).log2()))
}

/// Dense joint probability table over named finite variables.
///
/// Cells are laid out row-major in the order of `vars`: the last
/// variable varies fastest.
#[derive(Debug, Clone)]
pub struct JointTable {
    vars: Vec<(String, usize)>,
    probs: Vec<f64>,
}

impl JointTable {
    pub fn new(vars: Vec<(String, usize)>, probs: Vec<f64>) -> Result<Self, ProbError> {
        Self::new_capped(vars, probs, DEFAULT_CELL_CAP)
    }

    pub fn new_capped(
        vars: Vec<(String, usize)>,
        probs: Vec<f64>,
        cell_cap: usize,
    ) -> Result<Self, ProbError> {
        let mut cells: usize = 1;
        for (name, card) in &vars {
            if *card == 0 {
                return Err(ProbError::EmptyVariable(name.clone()));
            }
            if vars.iter().filter(|(n, _)| n == name).count() > 1 {
                return Err(ProbError::DuplicateVariable(name.clone()));
            }
            cells = cells
                .checked_mul(*card)
                .ok_or(ProbError::CellCapExceeded(usize::MAX, cell_cap))?;
        }
        if cells > cell_cap {
            return Err(ProbError::CellCapExceeded(cells, cell_cap));
        }
        if probs.len() != cells {
            return Err(ProbError::ShapeMismatch(format!(
                "expected {} cells, got {}",
                cells,
                probs.len()
            )));
        }
        let mut sum = 0.0;
        for &p in &probs {
            if p < 0.0 {
                return Err(ProbError::NegativeEntry(p));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(ProbError::NotNormalized(sum));
        }
        Ok(JointTable { vars, probs })
    }

    /// Builds a table by evaluating `f` on every configuration.
    pub fn from_fn(
        vars: Vec<(String, usize)>,
        f: impl Fn(&[usize]) -> f64,
    ) -> Result<Self, ProbError> {
        let cells: usize = vars.iter().map(|(_, c)| c).product();
        let cards: Vec<usize> = vars.iter().map(|(_, c)| *c).collect();
        let mut probs = vec![0.0; cells];
        let mut idx = vec![0usize; vars.len()];
        for (cell, p) in probs.iter_mut().enumerate() {
            unflatten(cell, &cards, &mut idx);
            *p = f(&idx);
        }
        Self::new(vars, probs)
    }

    pub fn variables(&self) -> &[(String, usize)] {
        &self.vars
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn var_position(&self, name: &str) -> Result<usize, ProbError> {
        self.vars
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| ProbError::UnknownVariable(name.to_string()))
    }

    fn cards(&self) -> Vec<usize> {
        self.vars.iter().map(|(_, c)| *c).collect()
    }

    pub fn rename_var(&mut self, from: &str, to: &str) -> Result<(), ProbError> {
        if self.vars.iter().any(|(n, _)| n == to) {
            return Err(ProbError::VariableClash(to.to_string()));
        }
        let pos = self.var_position(from)?;
        self.vars[pos].0 = to.to_string();
        Ok(())
    }

    /// Marginal over `keep`, in the original variable order.
    pub fn marginalize(&self, keep: &[&str]) -> Result<JointTable, ProbError> {
        let mut keep_pos = Vec::with_capacity(keep.len());
        for name in keep {
            keep_pos.push(self.var_position(name)?);
        }
        keep_pos.sort_unstable();
        keep_pos.dedup();
        let cards = self.cards();
        let out_vars: Vec<(String, usize)> =
            keep_pos.iter().map(|&i| self.vars[i].clone()).collect();
        let out_cards: Vec<usize> = out_vars.iter().map(|(_, c)| *c).collect();
        let out_cells: usize = out_cards.iter().product();
        let mut out = vec![0.0; out_cells];
        let mut idx = vec![0usize; self.vars.len()];
        for (cell, &p) in self.probs.iter().enumerate() {
            unflatten(cell, &cards, &mut idx);
            let mut o = 0usize;
            for (&kp, &oc) in keep_pos.iter().zip(&out_cards) {
                o = o * oc + idx[kp];
            }
            out[o] += p;
        }
        Ok(JointTable {
            vars: out_vars,
            probs: out,
        })
    }

    /// Conditions on `var = value`, dropping the variable and renormalizing.
    pub fn condition(&self, var: &str, value: usize) -> Result<JointTable, ProbError> {
        let pos = self.var_position(var)?;
        if value >= self.vars[pos].1 {
            return Err(ProbError::OutOfRange(value as f64));
        }
        let cards = self.cards();
        let out_vars: Vec<(String, usize)> = self
            .vars
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != pos)
            .map(|(_, v)| v.clone())
            .collect();
        let out_cells: usize = out_vars.iter().map(|(_, c)| c).product();
        let mut out = vec![0.0; out_cells.max(1)];
        let mut idx = vec![0usize; self.vars.len()];
        let mut mass = 0.0;
        for (cell, &p) in self.probs.iter().enumerate() {
            unflatten(cell, &cards, &mut idx);
            if idx[pos] != value {
                continue;
            }
            mass += p;
            let mut o = 0usize;
            for (i, &v) in idx.iter().enumerate() {
                if i == pos {
                    continue;
                }
                o = o * cards[i] + v;
            }
            out[o] += p;
        }
        if mass <= ZERO_PROB {
            return Err(ProbError::ZeroProbabilityEvent);
        }
        for p in &mut out {
            *p /= mass;
        }
        Ok(JointTable {
            vars: out_vars,
            probs: out,
        })
    }

    /// Joint entropy of the named variable subset, in bits.
    pub fn entropy_of(&self, vars: &[&str]) -> Result<Bits, ProbError> {
        let marg = self.marginalize(vars)?;
        Ok(Bits(entropy_unchecked(&marg.probs)))
    }

    /// I(A;B) = H(A) + H(B) - H(A,B), clamped at zero within slack.
    pub fn mutual_info(&self, a: &[&str], b: &[&str]) -> Result<Bits, ProbError> {
        self.mutual_info_tol(a, b, Tolerances::default())
    }

    pub fn mutual_info_tol(
        &self,
        a: &[&str],
        b: &[&str],
        tol: Tolerances,
    ) -> Result<Bits, ProbError> {
        check_disjoint(&[a, b])?;
        let ha = self.entropy_of(a)?.0;
        let hb = self.entropy_of(b)?.0;
        let ab: Vec<&str> = a.iter().chain(b.iter()).copied().collect();
        let hab = self.entropy_of(&ab)?.0;
        clamp_info(ha + hb - hab, tol)
    }

    /// I(A;B|C) = H(A,C) + H(B,C) - H(A,B,C) - H(C).
    pub fn cond_mutual_info(&self, a: &[&str], b: &[&str], c: &[&str]) -> Result<Bits, ProbError> {
        self.cond_mutual_info_tol(a, b, c, Tolerances::default())
    }

    pub fn cond_mutual_info_tol(
        &self,
        a: &[&str],
        b: &[&str],
        c: &[&str],
        tol: Tolerances,
    ) -> Result<Bits, ProbError> {
        check_disjoint(&[a, b, c])?;
        let ac: Vec<&str> = a.iter().chain(c.iter()).copied().collect();
        let bc: Vec<&str> = b.iter().chain(c.iter()).copied().collect();
        let abc: Vec<&str> = a.iter().chain(b.iter()).chain(c.iter()).copied().collect();
        let hac = self.entropy_of(&ac)?.0;
        let hbc = self.entropy_of(&bc)?.0;
        let habc = self.entropy_of(&abc)?.0;
        let hc = self.entropy_of(c)?.0;
        clamp_info(hac + hbc - habc - hc, tol)
    }

    /// Extends the joint with the channel's target variables, conditionally
    /// independent of everything else given the channel's source variables.
    pub fn compose(&self, channel: &Channel) -> Result<JointTable, ProbError> {
        for (name, card) in &channel.from_vars {
            let pos = self.var_position(name)?;
            if self.vars[pos].1 != *card {
                return Err(ProbError::ShapeMismatch(format!(
                    "cardinality mismatch on {name}: {} vs {}",
                    self.vars[pos].1, *card
                )));
            }
        }
        for (name, _) in &channel.to_vars {
            if self.vars.iter().any(|(n, _)| n == name) {
                return Err(ProbError::VariableClash(name.clone()));
            }
        }
        let from_pos: Vec<usize> = channel
            .from_vars
            .iter()
            .map(|(n, _)| self.var_position(n).unwrap())
            .collect();
        let from_cards: Vec<usize> = channel.from_vars.iter().map(|(_, c)| *c).collect();
        let to_cells: usize = channel.to_vars.iter().map(|(_, c)| c).product();

        let mut out_vars = self.vars.clone();
        out_vars.extend(channel.to_vars.iter().cloned());
        let out_cells = self
            .probs
            .len()
            .checked_mul(to_cells)
            .ok_or(ProbError::CellCapExceeded(usize::MAX, DEFAULT_CELL_CAP))?;
        if out_cells > DEFAULT_CELL_CAP {
            return Err(ProbError::CellCapExceeded(out_cells, DEFAULT_CELL_CAP));
        }

        let cards = self.cards();
        let mut out = vec![0.0; out_cells];
        let mut idx = vec![0usize; self.vars.len()];
        for (cell, &p) in self.probs.iter().enumerate() {
            unflatten(cell, &cards, &mut idx);
            let mut row = 0usize;
            for (&fp, &fc) in from_pos.iter().zip(&from_cards) {
                row = row * fc + idx[fp];
            }
            let row_probs = &channel.rows[row];
            let base = cell * to_cells;
            for (t, &rp) in row_probs.iter().enumerate() {
                out[base + t] = p * rp;
            }
        }
        Ok(JointTable {
            vars: out_vars,
            probs: out,
        })
    }

    /// Appends a variable that is a deterministic function of the existing
    /// configuration.
    pub fn augment_deterministic(
        &self,
        name: &str,
        card: usize,
        f: impl Fn(&[usize]) -> usize,
    ) -> Result<JointTable, ProbError> {
        if self.vars.iter().any(|(n, _)| n == name) {
            return Err(ProbError::VariableClash(name.to_string()));
        }
        if card == 0 {
            return Err(ProbError::EmptyVariable(name.to_string()));
        }
        let cards = self.cards();
        let mut out = vec![0.0; self.probs.len() * card];
        let mut idx = vec![0usize; self.vars.len()];
        for (cell, &p) in self.probs.iter().enumerate() {
            unflatten(cell, &cards, &mut idx);
            let v = f(&idx);
            if v >= card {
                return Err(ProbError::OutOfRange(v as f64));
            }
            out[cell * card + v] = p;
        }
        let mut out_vars = self.vars.clone();
        out_vars.push((name.to_string(), card));
        Ok(JointTable {
            vars: out_vars,
            probs: out,
        })
    }

    /// Appends an independent variable with the given marginal.
    pub fn augment_independent(&self, name: &str, dist: &[f64]) -> Result<JointTable, ProbError> {
        let ch = Channel::new(
            vec![],
            vec![(name.to_string(), dist.len())],
            vec![dist.to_vec()],
        )?;
        self.compose(&ch)
    }

    /// Debug dump: one row per configuration, columns = variable values + probability.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (name, _) in &self.vars {
            out.push_str(name);
            out.push(',');
        }
        out.push_str("probability\n");
        let cards = self.cards();
        let mut idx = vec![0usize; self.vars.len()];
        for (cell, &p) in self.probs.iter().enumerate() {
            unflatten(cell, &cards, &mut idx);
            for &v in &idx {
                out.push_str(&v.to_string());
                out.push(',');
            }
            out.push_str(&format!("{:.11e}\n", p));
        }
        out
    }
}

fn clamp_info(v: f64, tol: Tolerances) -> Result<Bits, ProbError> {
    if v < -tol.slack {
        return Err(ProbError::NegativeInformation(v));
    }
    Ok(Bits(v.max(0.0)))
}

fn check_disjoint(sets: &[&[&str]]) -> Result<(), ProbError> {
    for (i, a) in sets.iter().enumerate() {
        for b in sets.iter().skip(i + 1) {
            for name in *a {
                if b.contains(name) {
                    return Err(ProbError::OverlappingSets(name.to_string()));
                }
            }
        }
    }
    Ok(())
}

fn unflatten(mut cell: usize, cards: &[usize], idx: &mut [usize]) {
    for i in (0..cards.len()).rev() {
        idx[i] = cell % cards[i];
        cell /= cards[i];
    }
}

/// Conditional law P(to_vars | from_vars): one normalized row per source
/// configuration (row-major over from_vars).
#[derive(Debug, Clone)]
pub struct Channel {
    pub from_vars: Vec<(String, usize)>,
    pub to_vars: Vec<(String, usize)>,
    pub rows: Vec<Vec<f64>>,
}

impl Channel {
    pub fn new(
        from_vars: Vec<(String, usize)>,
        to_vars: Vec<(String, usize)>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self, ProbError> {
        let from_cells: usize = from_vars.iter().map(|(_, c)| c).product();
        let to_cells: usize = to_vars.iter().map(|(_, c)| c).product();
        if rows.len() != from_cells {
            return Err(ProbError::ShapeMismatch(format!(
                "expected {} rows, got {}",
                from_cells,
                rows.len()
            )));
        }
        for row in &rows {
            if row.len() != to_cells {
                return Err(ProbError::ShapeMismatch(format!(
                    "expected row length {}, got {}",
                    to_cells,
                    row.len()
                )));
            }
            let mut sum = 0.0;
            for &p in row {
                if p < 0.0 {
                    return Err(ProbError::NegativeEntry(p));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-12 {
                return Err(ProbError::NotNormalized(sum));
            }
        }
        Ok(Channel {
            from_vars,
            to_vars,
            rows,
        })
    }

    /// Binary symmetric channel with the given flip probability.
    pub fn binary_symmetric(from: &str, to: &str, flip: f64) -> Result<Self, ProbError> {
        if !(0.0..=1.0).contains(&flip) {
            return Err(ProbError::OutOfRange(flip));
        }
        Channel::new(
            vec![(from.to_string(), 2)],
            vec![(to.to_string(), 2)],
            vec![vec![1.0 - flip, flip], vec![flip, 1.0 - flip]],
        )
    }

    /// Deterministic copy of a variable.
    pub fn identity(from: &str, to: &str, card: usize) -> Result<Self, ProbError> {
        let rows = (0..card)
            .map(|i| {
                let mut r = vec![0.0; card];
                r[i] = 1.0;
                r
            })
            .collect();
        Channel::new(
            vec![(from.to_string(), card)],
            vec![(to.to_string(), card)],
            rows,
        )
    }
}
