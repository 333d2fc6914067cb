//! Accessible-state enumeration and sparse generator assembly.
//!
//! States are discovered breadth-first from the initial state; every reaction
//! with positive propensity contributes its rate to the generator at
//! (target, source). Parallel transitions between the same pair of states sum.

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::network::{ReactionNetwork, Speed};

/// A point of the discrete state space: one count per species.
pub type State = Vec<u64>;

/// Indexed accessible states; index 0 is the initial state and discovery
/// order is the breadth-first order, so runs are reproducible.
#[derive(Debug, Clone)]
pub struct StateSpace {
    pub states: Vec<State>,
    index: HashMap<State, usize>,
}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, state: &[u64]) -> Option<usize> {
        self.index.get(state).copied()
    }
}

/// Sparse Markov generator. Off-diagonal entries are kept as column-grouped
/// (row, rate) pairs; the diagonal is the negative column sum, so every
/// column sums to zero by construction.
#[derive(Debug, Clone)]
pub struct Generator {
    dim: usize,
    cols: Vec<Vec<(usize, f64)>>,
    diag: Vec<f64>,
}

impl Generator {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Off-diagonal entries of column `j` as (row, rate), sorted by row.
    pub fn column(&self, j: usize) -> &[(usize, f64)] {
        &self.cols[j]
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// All entries including the diagonal, column-major.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |j| {
            let d = self.diag[j];
            self.cols[j]
                .iter()
                .map(move |&(i, v)| (i, j, v))
                .chain((d != 0.0).then_some((j, j, d)))
        })
    }

    pub fn nnz(&self) -> usize {
        self.cols.iter().map(|c| c.len()).sum::<usize>()
            + self.diag.iter().filter(|&&d| d != 0.0).count()
    }

    /// Entry (i, j); linear scan of the (short) column.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[j];
        }
        self.cols[j]
            .iter()
            .find(|&&(r, _)| r == i)
            .map_or(0.0, |&(_, v)| v)
    }

    /// y = K x.
    pub fn mat_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        for j in 0..self.dim {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            y[j] += self.diag[j] * xj;
            for &(i, v) in &self.cols[j] {
                y[i] += v * xj;
            }
        }
        y
    }

    /// Largest |diagonal| entry; an upper bound on every exit rate.
    pub fn max_exit_rate(&self) -> f64 {
        self.diag.iter().fold(0.0, |a, &d| a.max(-d))
    }

    /// Largest |entry|.
    pub fn norm_max(&self) -> f64 {
        let off = self
            .cols
            .iter()
            .flatten()
            .fold(0.0f64, |a, &(_, v)| a.max(v.abs()));
        off.max(self.diag.iter().fold(0.0, |a, &d| a.max(d.abs())))
    }

    /// Entrywise sum, used to check full = fast + slow.
    pub fn add(&self, other: &Generator) -> Generator {
        assert_eq!(self.dim, other.dim);
        let mut b = GeneratorBuilder::new(self.dim);
        for g in [self, other] {
            for j in 0..g.dim {
                for &(i, v) in &g.cols[j] {
                    b.add(i, j, v);
                }
            }
        }
        b.finish()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.dim, self.dim);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    /// Dense sub-block for a subset of states, in the given order.
    pub fn dense_block(&self, rows: &[usize], cols: &[usize]) -> nalgebra::DMatrix<f64> {
        let pos: HashMap<usize, usize> = rows.iter().enumerate().map(|(k, &s)| (s, k)).collect();
        let mut m = nalgebra::DMatrix::zeros(rows.len(), cols.len());
        for (ck, &j) in cols.iter().enumerate() {
            if let Some(&rk) = pos.get(&j) {
                m[(rk, ck)] = self.diag[j];
            }
            for &(i, v) in &self.cols[j] {
                if let Some(&rk) = pos.get(&i) {
                    m[(rk, ck)] += v;
                }
            }
        }
        m
    }
}

/// Accumulates off-diagonal rates; duplicates sum.
pub struct GeneratorBuilder {
    dim: usize,
    cols: Vec<Vec<(usize, f64)>>,
}

impl GeneratorBuilder {
    pub fn new(dim: usize) -> Self {
        GeneratorBuilder {
            dim,
            cols: vec![Vec::new(); dim],
        }
    }

    /// Extend the dimension; `add` also grows on demand.
    pub fn grow_to(&mut self, dim: usize) {
        assert!(dim >= self.dim);
        self.dim = dim;
        self.cols.resize(dim, Vec::new());
    }

    pub fn add(&mut self, target: usize, source: usize, rate: f64) {
        assert!(target != source, "off-diagonal entries only");
        assert!(rate >= 0.0);
        if target.max(source) >= self.dim {
            self.grow_to(target.max(source) + 1);
        }
        self.cols[source].push((target, rate));
    }

    pub fn finish(mut self) -> Generator {
        let mut diag = vec![0.0; self.dim];
        for (j, col) in self.cols.iter_mut().enumerate() {
            col.sort_unstable_by_key(|&(i, _)| i);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(col.len());
            for &(i, v) in col.iter() {
                match merged.last_mut() {
                    Some((li, lv)) if *li == i => *lv += v,
                    _ => merged.push((i, v)),
                }
            }
            *col = merged;
            diag[j] = -col.iter().map(|&(_, v)| v).sum::<f64>();
        }
        Generator {
            dim: self.dim,
            cols: self.cols,
            diag,
        }
    }
}

/// The full generator and its split into fast and slow parts.
/// full = fast + slow entrywise; each part is itself a generator.
#[derive(Debug, Clone)]
pub struct SplitGenerator {
    pub full: Generator,
    pub fast: Generator,
    pub slow: Generator,
}

/// Outcome of state-space exploration, including what was truncated at the
/// cap boundary. `truncated_rate` is the summed propensity of all dropped
/// transitions; it bounds the probability-flux leakage of the box.
#[derive(Debug, Clone)]
pub struct Exploration {
    pub space: StateSpace,
    pub split: SplitGenerator,
    pub truncated_transitions: usize,
    pub truncated_rate: f64,
}

/// Tuning knobs for `explore`.
#[derive(Debug, Clone)]
pub struct ExploreOptions {
    /// Hard limit on the number of accessible states.
    pub max_states: usize,
    /// Refuse to truncate: any transition leaving the box is an error.
    pub strict_caps: bool,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions {
            max_states: 5_000_000,
            strict_caps: false,
        }
    }
}

/// Number of reactant combinations: product of binomials C(n_i, nu_ij).
fn combinations(counts: &[u64], reactant: &[u64]) -> Result<u128> {
    let mut h: u128 = 1;
    for (&n, &k) in counts.iter().zip(reactant) {
        if k == 0 {
            continue;
        }
        if n < k {
            return Ok(0);
        }
        let mut num: u128 = 1;
        let mut den: u128 = 1;
        for step in 0..k {
            num = num
                .checked_mul((n - step) as u128)
                .ok_or(Error::Overflow { n, k })?;
            den *= (step + 1) as u128;
        }
        h = h.checked_mul(num / den).ok_or(Error::Overflow { n, k })?;
    }
    Ok(h)
}

/// Propensity of reaction `l` in state `n` (stochastic mass action):
/// rate constant times the number of independent reactant combinations.
pub fn propensity(net: &ReactionNetwork, n: &[u64], l: usize) -> f64 {
    let r = &net.reactions[l];
    let reactant = &net.complexes[r.reactant].coefficients;
    match combinations(n, reactant) {
        Ok(h) => r.rate_constant * h as f64,
        Err(_) => f64::INFINITY,
    }
}

/// Breadth-first closure of the accessible states with generator assembly.
pub fn explore(net: &ReactionNetwork) -> Result<Exploration> {
    explore_with(net, &ExploreOptions::default())
}

pub fn explore_with(net: &ReactionNetwork, opts: &ExploreOptions) -> Result<Exploration> {
    if !crate::network::provably_bounded(net) {
        let input = net.input_reactions().first().map(|r| r.label.clone());
        return Err(Error::Unbounded {
            input_reaction: input,
        });
    }
    let deltas: Vec<Vec<i64>> = (0..net.reaction_count()).map(|l| net.delta(l)).collect();

    let mut states = vec![net.initial_state.clone()];
    let mut index = HashMap::new();
    index.insert(net.initial_state.clone(), 0usize);
    let mut queue: VecDeque<usize> = VecDeque::from([0]);

    let mut fast = GeneratorBuilder::new(0);
    let mut slow = GeneratorBuilder::new(0);
    let mut truncated_transitions = 0usize;
    let mut truncated_rate = 0.0f64;

    while let Some(src) = queue.pop_front() {
        let counts = states[src].clone();
        for (l, reaction) in net.reactions.iter().enumerate() {
            let rate = propensity(net, &counts, l);
            if rate <= 0.0 {
                continue;
            }
            // Positive propensity guarantees the reactants are available, so
            // the target never goes negative.
            let target: State = counts
                .iter()
                .zip(&deltas[l])
                .map(|(&n, &d)| (n as i64 + d) as u64)
                .collect();
            if let Some(caps) = &net.caps {
                if target.iter().zip(caps).any(|(&n, &c)| n > c) {
                    if opts.strict_caps {
                        return Err(Error::CapExceeded {
                            reaction: reaction.label.clone(),
                            state: counts,
                        });
                    }
                    truncated_transitions += 1;
                    truncated_rate += rate;
                    continue;
                }
            }
            let tgt = match index.get(&target) {
                Some(&i) => i,
                None => {
                    let i = states.len();
                    if i >= opts.max_states {
                        return Err(Error::StateBudgetExceeded {
                            limit: opts.max_states,
                        });
                    }
                    index.insert(target.clone(), i);
                    states.push(target);
                    queue.push_back(i);
                    i
                }
            };
            match reaction.speed {
                Speed::Fast => fast.add(tgt, src, rate),
                Speed::Slow => slow.add(tgt, src, rate),
            }
        }
    }

    let n = states.len();
    fast.grow_to(n);
    slow.grow_to(n);
    let fast = fast.finish();
    let slow = slow.finish();
    let full = fast.add(&slow);
    Ok(Exploration {
        space: StateSpace { states, index },
        split: SplitGenerator { full, fast, slow },
        truncated_transitions,
        truncated_rate,
    })
}

/// Number of states of a closed system: C(n0 + m - 1, m - 1).
pub fn state_count_closed(m: u64, n0: u64) -> Result<u64> {
    if m < 1 {
        return Err(Error::Invalid("need at least one species".into()));
    }
    let k = m - 1;
    let n = n0 + k;
    let mut acc: u128 = 1;
    for step in 0..k {
        acc = acc
            .checked_mul((n - step) as u128)
            .ok_or(Error::Overflow { n, k })?;
        acc /= (step + 1) as u128;
    }
    u64::try_from(acc).map_err(|_| Error::Overflow { n, k })
}
