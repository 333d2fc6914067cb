//! Stochastic simulation: the exact direct method on the full network, the
//! slow-scale method on the reduced chain (precomputed or on-the-fly), and a
//! parallel ensemble runner with reproducible per-realization streams.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::faststructure;
use crate::network::{ReactionNetwork, Speed};
use crate::reduction::{build_projections, ReducedSystem};
use crate::rng::PathRng;
use crate::statespace::{propensity, GeneratorBuilder, SplitGenerator, State, StateSpace};

/// Realizations per work unit; chunks are merged in index order so ensemble
/// statistics do not depend on thread scheduling.
const CHUNK: usize = 32;

/// One realization of the full chain: the state after each jump, starting
/// with the initial state at t = 0.
#[derive(Debug, Clone)]
pub struct SamplePath {
    pub jump_times: Vec<f64>,
    pub states: Vec<State>,
    pub seed: u64,
    /// True when the path hit the truncation box and was stopped early.
    pub truncated: bool,
}

/// One realization of the reduced chain over aggregated-state indices.
#[derive(Debug, Clone)]
pub struct AggregatedPath {
    pub jump_times: Vec<f64>,
    pub states: Vec<usize>,
    pub seed: u64,
}

fn check_init(net: &ReactionNetwork, init: &[u64]) -> Result<()> {
    if init.len() != net.species_count() {
        return Err(Error::DimensionMismatch {
            expected: net.species_count(),
            got: init.len(),
        });
    }
    if let Some(caps) = &net.caps {
        if init.iter().zip(caps).any(|(&n, &c)| n > c) {
            return Err(Error::Invalid("initial state exceeds caps".into()));
        }
    }
    Ok(())
}

/// Direct-method event pick: inverse CDF over the fixed event order.
fn pick_event(rng: &mut PathRng, rates: &[f64], total: f64) -> usize {
    let target = rng.uniform_open01() * total;
    let mut cum = 0.0;
    for (idx, &r) in rates.iter().enumerate() {
        cum += r;
        if cum >= target && r > 0.0 {
            return idx;
        }
    }
    // Roundoff fallthrough: last event with positive rate.
    rates
        .iter()
        .rposition(|&r| r > 0.0)
        .expect("positive total rate")
}

/// Exact Gillespie simulation of the full network, recording every jump.
pub fn ssa_exact(net: &ReactionNetwork, init: &[u64], t_end: f64, seed: u64) -> Result<SamplePath> {
    check_init(net, init)?;
    if !(t_end > 0.0) {
        return Err(Error::Invalid("t_end must be positive".into()));
    }
    let mut path = SamplePath {
        jump_times: vec![0.0],
        states: vec![init.to_vec()],
        seed,
        truncated: false,
    };
    let mut rng = PathRng::new(seed);
    let truncated = simulate_full(net, init, t_end, &mut rng, |t, state| {
        path.jump_times.push(t);
        path.states.push(state.to_vec());
    });
    path.truncated = truncated;
    Ok(path)
}

/// Core full-network stepper; calls `on_jump(t, state)` after every accepted
/// jump. Returns whether the path was truncated at the cap boundary.
fn simulate_full<F: FnMut(f64, &[u64])>(
    net: &ReactionNetwork,
    init: &[u64],
    t_end: f64,
    rng: &mut PathRng,
    mut on_jump: F,
) -> bool {
    let r = net.reaction_count();
    let deltas: Vec<Vec<i64>> = (0..r).map(|l| net.delta(l)).collect();
    let mut state: State = init.to_vec();
    let mut rates = vec![0.0f64; r];
    let mut t = 0.0f64;
    loop {
        let mut total = 0.0;
        for l in 0..r {
            rates[l] = propensity(net, &state, l);
            total += rates[l];
        }
        if total <= 0.0 {
            return false; // absorbing state; the path simply ends
        }
        t += -rng.uniform_open01().ln() / total;
        if t > t_end {
            return false;
        }
        let l = pick_event(rng, &rates, total);
        let mut next = state.clone();
        for (x, &d) in next.iter_mut().zip(&deltas[l]) {
            *x = (*x as i64 + d) as u64;
        }
        if let Some(caps) = &net.caps {
            if next.iter().zip(caps).any(|(&n, &c)| n > c) {
                return true; // truncated at the box
            }
        }
        state = next;
        on_jump(t, &state);
    }
}

/// Gillespie simulation on the precomputed reduced generator.
pub fn ssa_slow(
    reduced: &ReducedSystem,
    init: usize,
    t_end: f64,
    seed: u64,
) -> Result<AggregatedPath> {
    if init >= reduced.generator.dim() {
        return Err(Error::DimensionMismatch {
            expected: reduced.generator.dim(),
            got: init,
        });
    }
    if !(t_end > 0.0) {
        return Err(Error::Invalid("t_end must be positive".into()));
    }
    let mut rng = PathRng::new(seed);
    let mut path = AggregatedPath {
        jump_times: vec![0.0],
        states: vec![init],
        seed,
    };
    let mut current = init;
    let mut t = 0.0;
    loop {
        let col = reduced.generator.column(current);
        let total: f64 = col.iter().map(|&(_, v)| v).sum();
        if total <= 0.0 {
            break;
        }
        t += -rng.uniform_open01().ln() / total;
        if t > t_end {
            break;
        }
        let rates: Vec<f64> = col.iter().map(|&(_, v)| v).collect();
        let idx = pick_event(&mut rng, &rates, total);
        current = col[idx].0;
        path.jump_times.push(t);
        path.states.push(current);
    }
    Ok(path)
}

// ---------------------------------------------------------------------------
// On-the-fly slow-scale simulation.
// ---------------------------------------------------------------------------

/// Invariant data of one fast simplex discovered on the fly. The key is the
/// lexicographically smallest member of the absorbing scc, which identifies
/// the simplex independently of discovery order.
#[derive(Debug)]
pub struct SimplexData {
    pub key: State,
    pub ntilde: Vec<i64>,
    /// Conditional species mean and second moment under the invariant
    /// distribution.
    pub cond_mean: Vec<f64>,
    pub cond_second: Vec<f64>,
    /// Outgoing slow events: rate (propensity times invariant weight) and the
    /// landing state. Order is fixed by (absorbing state, reaction).
    pub events: Vec<(f64, State)>,
    pub total_rate: f64,
}

struct LocalComponent {
    /// Lexicographically sorted member states.
    states: Vec<State>,
    index: HashMap<State, usize>,
    /// Absorption probabilities: l[(a, local state)] per aggregated a.
    l: nalgebra::DMatrix<f64>,
    simplexes: Vec<Arc<SimplexData>>,
}

/// Lazily reduces the network one fast component at a time, caching the
/// invariant distributions and outgoing slow rates per visited simplex.
///
/// Equivalent in law to simulating the precomputed reduced generator: an
/// event is drawn among (absorbing state, slow reaction) pairs with rates
/// weighted by the invariant distribution, and the landing state is absorbed
/// into its target simplex with the L-row probabilities. Landings that
/// re-absorb into the current simplex advance time without a recorded jump.
pub struct OnTheFlyReducer<'a> {
    net: &'a ReactionNetwork,
    afast: Vec<Vec<i64>>,
    /// Hard limit on the size of one fast component.
    pub budget: usize,
    components: HashMap<State, Arc<LocalComponent>>,
    component_of: HashMap<State, State>,
    fast_reactions: Vec<usize>,
    slow_reactions: Vec<usize>,
    deltas: Vec<Vec<i64>>,
}

impl<'a> OnTheFlyReducer<'a> {
    pub fn new(net: &'a ReactionNetwork) -> Result<Self> {
        let afast = crate::network::fast_invariant_matrix(net)?;
        let r = net.reaction_count();
        Ok(OnTheFlyReducer {
            net,
            afast,
            budget: 200_000,
            components: HashMap::new(),
            component_of: HashMap::new(),
            fast_reactions: (0..r)
                .filter(|&l| net.reactions[l].speed == Speed::Fast)
                .collect(),
            slow_reactions: (0..r)
                .filter(|&l| net.reactions[l].speed == Speed::Slow)
                .collect(),
            deltas: (0..r).map(|l| net.delta(l)).collect(),
        })
    }

    fn within_caps(&self, state: &[u64]) -> bool {
        match &self.net.caps {
            Some(caps) => state.iter().zip(caps).all(|(&n, &c)| n <= c),
            None => true,
        }
    }

    /// Undirected fast closure of `seed`, sorted so that local indexing is
    /// independent of the entry point.
    fn explore_component(&self, seed: &[u64]) -> Result<Vec<State>> {
        let mut seen: std::collections::HashSet<State> = std::collections::HashSet::new();
        seen.insert(seed.to_vec());
        let mut queue = std::collections::VecDeque::from([seed.to_vec()]);
        let mut states = vec![seed.to_vec()];
        while let Some(n) = queue.pop_front() {
            for &l in &self.fast_reactions {
                // Forward edge n -> n + d.
                if propensity(self.net, &n, l) > 0.0 {
                    let t: State = n
                        .iter()
                        .zip(&self.deltas[l])
                        .map(|(&x, &d)| (x as i64 + d) as u64)
                        .collect();
                    if self.within_caps(&t) && !seen.contains(&t) {
                        seen.insert(t.clone());
                        states.push(t.clone());
                        queue.push_back(t);
                    }
                }
                // Backward edge m -> n with m = n - d.
                if n.iter().zip(&self.deltas[l]).all(|(&x, &d)| x as i64 - d >= 0) {
                    let m: State = n
                        .iter()
                        .zip(&self.deltas[l])
                        .map(|(&x, &d)| (x as i64 - d) as u64)
                        .collect();
                    if self.within_caps(&m)
                        && propensity(self.net, &m, l) > 0.0
                        && !seen.contains(&m)
                    {
                        seen.insert(m.clone());
                        states.push(m.clone());
                        queue.push_back(m);
                    }
                }
            }
            if states.len() > self.budget {
                return Err(Error::StateBudgetExceeded { limit: self.budget });
            }
        }
        states.sort_unstable();
        Ok(states)
    }

    fn build_component(&mut self, seed: &[u64]) -> Result<Arc<LocalComponent>> {
        let states = self.explore_component(seed)?;
        let key = states[0].clone();
        if let Some(c) = self.components.get(&key) {
            return Ok(c.clone());
        }
        let index: HashMap<State, usize> = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        let mut fast = GeneratorBuilder::new(states.len());
        for (j, s) in states.iter().enumerate() {
            for &l in &self.fast_reactions {
                let rate = propensity(self.net, s, l);
                if rate <= 0.0 {
                    continue;
                }
                let t: State = s
                    .iter()
                    .zip(&self.deltas[l])
                    .map(|(&x, &d)| (x as i64 + d) as u64)
                    .collect();
                if let Some(&ti) = index.get(&t) {
                    fast.add(ti, j, rate);
                }
            }
        }
        let fast = fast.finish();
        let structure = faststructure::analyze(&fast);
        let zeros = GeneratorBuilder::new(states.len()).finish();
        let split = SplitGenerator {
            full: fast.clone(),
            fast,
            slow: zeros,
        };
        let pair = build_projections(&structure, &split)?;

        let mut simplexes = Vec::with_capacity(pair.aggregated.len());
        for agg in &pair.aggregated {
            let rep = agg.member_states[0];
            let m = self.net.species_count();
            let mut cond_mean = vec![0.0; m];
            let mut cond_second = vec![0.0; m];
            for (&local, &pi) in agg.member_states.iter().zip(&agg.pi) {
                for (k, &n) in states[local].iter().enumerate() {
                    let x = n as f64;
                    cond_mean[k] += pi * x;
                    cond_second[k] += pi * x * x;
                }
            }
            let mut events = Vec::new();
            let mut total_rate = 0.0;
            for (&local, &pi) in agg.member_states.iter().zip(&agg.pi) {
                for &l in &self.slow_reactions {
                    let rate = propensity(self.net, &states[local], l) * pi;
                    if rate <= 0.0 {
                        continue;
                    }
                    let landing: State = states[local]
                        .iter()
                        .zip(&self.deltas[l])
                        .map(|(&x, &d)| (x as i64 + d) as u64)
                        .collect();
                    if !self.within_caps(&landing) {
                        continue; // censored at the box, as in `explore`
                    }
                    total_rate += rate;
                    events.push((rate, landing));
                }
            }
            simplexes.push(Arc::new(SimplexData {
                key: states[rep].clone(),
                ntilde: faststructure::apply_invariant(&self.afast, &states[rep]),
                cond_mean,
                cond_second,
                events,
                total_rate,
            }));
        }

        let component = Arc::new(LocalComponent {
            l: pair.l,
            simplexes,
            index,
            states,
        });
        for s in &component.states {
            self.component_of.insert(s.clone(), key.clone());
        }
        self.components.insert(key, component.clone());
        Ok(component)
    }

    fn component_for(&mut self, state: &[u64]) -> Result<Arc<LocalComponent>> {
        if let Some(key) = self.component_of.get(state) {
            return Ok(self.components[key].clone());
        }
        self.build_component(state)
    }

    /// Absorb a landing state into a simplex: deterministic when the
    /// component has a single absorbing scc, otherwise a draw over the
    /// absorption probabilities (the L-row entries at the landing state).
    fn absorb(&mut self, state: &[u64], rng: &mut PathRng) -> Result<Arc<SimplexData>> {
        let comp = self.component_for(state)?;
        if comp.simplexes.len() == 1 {
            return Ok(comp.simplexes[0].clone());
        }
        let local = comp.index[state];
        let probs: Vec<f64> = (0..comp.simplexes.len())
            .map(|a| comp.l[(a, local)].max(0.0))
            .collect();
        let total: f64 = probs.iter().sum();
        let a = pick_event(rng, &probs, total);
        Ok(comp.simplexes[a].clone())
    }

    /// Simulate the aggregated chain from the fast simplex containing
    /// `init`, sampling conditional moments on `grid` (cadlag convention).
    pub fn simulate(&mut self, init: &[u64], grid: &[f64], seed: u64) -> Result<OtfRealization> {
        check_init(self.net, init)?;
        let t_end = *grid
            .last()
            .ok_or_else(|| Error::Invalid("empty grid".into()))?;
        let mut rng = PathRng::new(seed);
        let mut current = self.absorb(init, &mut rng)?;
        let mut jumps = vec![(0.0, current.clone())];
        let mut t = 0.0;
        let mut grid_idx = 0usize;
        let m = self.net.species_count();
        let mut cond_mean = Vec::with_capacity(grid.len() * m);
        let mut cond_second = Vec::with_capacity(grid.len() * m);
        loop {
            let total = current.total_rate;
            let t_next = if total > 0.0 {
                t + -rng.uniform_open01().ln() / total
            } else {
                f64::INFINITY
            };
            while grid_idx < grid.len() && grid[grid_idx] < t_next {
                cond_mean.extend_from_slice(&current.cond_mean);
                cond_second.extend_from_slice(&current.cond_second);
                grid_idx += 1;
            }
            if t_next > t_end || !t_next.is_finite() {
                break;
            }
            t = t_next;
            let rates: Vec<f64> = current.events.iter().map(|&(r, _)| r).collect();
            let e = pick_event(&mut rng, &rates, total);
            let landing = current.events[e].1.clone();
            let next = self.absorb(&landing, &mut rng)?;
            if next.key != current.key {
                current = next;
                jumps.push((t, current.clone()));
            }
        }
        Ok(OtfRealization {
            seed,
            jumps,
            cond_mean,
            cond_second,
        })
    }
}

/// One on-the-fly realization: the visited simplexes and the conditional
/// moments sampled on the grid (flattened time-major).
pub struct OtfRealization {
    pub seed: u64,
    pub jumps: Vec<(f64, Arc<SimplexData>)>,
    pub cond_mean: Vec<f64>,
    pub cond_second: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Ensembles.
// ---------------------------------------------------------------------------

/// Per-species mean and standard deviation on a time grid, across
/// realizations.
#[derive(Debug, Clone)]
pub struct EnsembleStats {
    pub grid: Vec<f64>,
    /// mean[t][k] for grid point t and species k.
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
    pub realization_count: usize,
}

/// Welford accumulator over flattened (time x species) vectors, merged
/// pairwise (Chan) so chunked parallel accumulation is exact and ordered.
#[derive(Clone)]
struct Welford {
    n: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(len: usize) -> Welford {
        Welford {
            n: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for (i, &xi) in x.iter().enumerate() {
            let d = xi - self.mean[i];
            self.mean[i] += d / n;
            self.m2[i] += d * (xi - self.mean[i]);
        }
    }

    fn merge(mut self, other: &Welford) -> Welford {
        if other.n == 0 {
            return self;
        }
        if self.n == 0 {
            return other.clone();
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.n += other.n;
        self
    }

    fn sample_variance(&self, i: usize) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2[i] / (self.n as f64 - 1.0)).max(0.0)
        }
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) || grid[0] < 0.0 {
        return Err(Error::Invalid(
            "grid must be non-empty and increasing".into(),
        ));
    }
    Ok(())
}

fn unflatten(stats: &Welford, n_t: usize, m: usize, grid: &[f64], n: usize) -> EnsembleStats {
    let mut mean = Vec::with_capacity(n_t);
    let mut std = Vec::with_capacity(n_t);
    for t in 0..n_t {
        mean.push((0..m).map(|k| stats.mean[t * m + k]).collect());
        std.push(
            (0..m)
                .map(|k| stats.sample_variance(t * m + k).sqrt())
                .collect(),
        );
    }
    EnsembleStats {
        grid: grid.to_vec(),
        mean,
        std,
        realization_count: n,
    }
}

/// Exact-SSA ensemble: `n` realizations with per-realization streams
/// base_seed + index, sampled on `grid` by the cadlag convention, reduced by
/// deterministic ordered chunk merging.
pub fn ensemble_exact(
    net: &ReactionNetwork,
    init: &[u64],
    grid: &[f64],
    n: usize,
    base_seed: u64,
) -> Result<EnsembleStats> {
    check_init(net, init)?;
    check_grid(grid)?;
    if n < 1 {
        return Err(Error::Invalid("need at least one realization".into()));
    }
    let m = net.species_count();
    let n_t = grid.len();
    let t_end = grid[n_t - 1];
    let chunks: Vec<(usize, usize)> = (0..n)
        .step_by(CHUNK)
        .map(|lo| (lo, (lo + CHUNK).min(n)))
        .collect();
    let partials: Vec<Welford> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut acc = Welford::new(n_t * m);
            let mut sample = vec![0.0f64; n_t * m];
            for r in lo..hi {
                let mut rng = PathRng::stream(base_seed, r as u64);
                let mut grid_idx = 0usize;
                let mut state: State = init.to_vec();
                simulate_full(net, init, t_end, &mut rng, |t, s| {
                    while grid_idx < n_t && grid[grid_idx] < t {
                        for (k, &x) in state.iter().enumerate() {
                            sample[grid_idx * m + k] = x as f64;
                        }
                        grid_idx += 1;
                    }
                    state = s.to_vec();
                });
                while grid_idx < n_t {
                    for (k, &x) in state.iter().enumerate() {
                        sample[grid_idx * m + k] = x as f64;
                    }
                    grid_idx += 1;
                }
                acc.push(&sample);
            }
            acc
        })
        .collect();
    let stats = partials
        .into_iter()
        .fold(Welford::new(n_t * m), |a, b| a.merge(&b));
    Ok(unflatten(&stats, n_t, m, grid, n))
}

/// Slow-scale ensemble on the precomputed reduced chain. Species statistics
/// use the law of total variance: each aggregated state contributes its
/// conditional mean and second moment under the invariant distribution.
pub fn ensemble_slow(
    reduced: &ReducedSystem,
    space: &StateSpace,
    init: usize,
    grid: &[f64],
    n: usize,
    base_seed: u64,
) -> Result<EnsembleStats> {
    check_grid(grid)?;
    if n < 1 {
        return Err(Error::Invalid("need at least one realization".into()));
    }
    if init >= reduced.generator.dim() {
        return Err(Error::DimensionMismatch {
            expected: reduced.generator.dim(),
            got: init,
        });
    }
    let m = space.states.first().map_or(0, |s| s.len());
    let n_t = grid.len();
    let t_end = grid[n_t - 1];
    // Conditional moments per aggregated state.
    let cond: Vec<(Vec<f64>, Vec<f64>)> = reduced
        .aggregated
        .iter()
        .map(|agg| {
            let mut mean = vec![0.0; m];
            let mut second = vec![0.0; m];
            for (&s, &pi) in agg.member_states.iter().zip(&agg.pi) {
                for (k, &x) in space.states[s].iter().enumerate() {
                    mean[k] += pi * x as f64;
                    second[k] += pi * (x as f64) * (x as f64);
                }
            }
            (mean, second)
        })
        .collect();

    let chunks: Vec<(usize, usize)> = (0..n)
        .step_by(CHUNK)
        .map(|lo| (lo, (lo + CHUNK).min(n)))
        .collect();
    let partials: Vec<(Welford, Welford)> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut acc_mean = Welford::new(n_t * m);
            let mut acc_second = Welford::new(n_t * m);
            let mut s_mean = vec![0.0f64; n_t * m];
            let mut s_second = vec![0.0f64; n_t * m];
            for r in lo..hi {
                let seed = base_seed.wrapping_add(r as u64);
                let path = ssa_slow(reduced, init, t_end, seed).expect("validated ensemble spec");
                let mut grid_idx = 0usize;
                for (j, &t_jump) in path.jump_times.iter().enumerate().skip(1) {
                    let prev = path.states[j - 1];
                    while grid_idx < n_t && grid[grid_idx] < t_jump {
                        s_mean[grid_idx * m..(grid_idx + 1) * m].copy_from_slice(&cond[prev].0);
                        s_second[grid_idx * m..(grid_idx + 1) * m].copy_from_slice(&cond[prev].1);
                        grid_idx += 1;
                    }
                }
                let last = *path.states.last().expect("non-empty path");
                while grid_idx < n_t {
                    s_mean[grid_idx * m..(grid_idx + 1) * m].copy_from_slice(&cond[last].0);
                    s_second[grid_idx * m..(grid_idx + 1) * m].copy_from_slice(&cond[last].1);
                    grid_idx += 1;
                }
                acc_mean.push(&s_mean);
                acc_second.push(&s_second);
            }
            (acc_mean, acc_second)
        })
        .collect();
    let (mean_stats, second_stats) = partials.into_iter().fold(
        (Welford::new(n_t * m), Welford::new(n_t * m)),
        |(a, b), (c, d)| (a.merge(&c), b.merge(&d)),
    );
    Ok(total_variance_stats(
        &mean_stats,
        &second_stats,
        n_t,
        m,
        grid,
        n,
    ))
}

/// Slow-scale ensemble with on-the-fly reduction; no global state space is
/// ever built. Each chunk owns its own simplex cache.
pub fn ensemble_slow_otf(
    net: &ReactionNetwork,
    init: &[u64],
    grid: &[f64],
    n: usize,
    base_seed: u64,
) -> Result<EnsembleStats> {
    check_init(net, init)?;
    check_grid(grid)?;
    if n < 1 {
        return Err(Error::Invalid("need at least one realization".into()));
    }
    let m = net.species_count();
    let n_t = grid.len();
    let chunks: Vec<(usize, usize)> = (0..n)
        .step_by(CHUNK)
        .map(|lo| (lo, (lo + CHUNK).min(n)))
        .collect();
    let partials: Vec<Result<(Welford, Welford)>> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut reducer = OnTheFlyReducer::new(net)?;
            let mut acc_mean = Welford::new(n_t * m);
            let mut acc_second = Welford::new(n_t * m);
            for r in lo..hi {
                let seed = base_seed.wrapping_add(r as u64);
                let real = reducer.simulate(init, grid, seed)?;
                acc_mean.push(&real.cond_mean);
                acc_second.push(&real.cond_second);
            }
            Ok((acc_mean, acc_second))
        })
        .collect();
    let mut mean_stats = Welford::new(n_t * m);
    let mut second_stats = Welford::new(n_t * m);
    for p in partials {
        let (a, b) = p?;
        mean_stats = mean_stats.merge(&a);
        second_stats = second_stats.merge(&b);
    }
    Ok(total_variance_stats(
        &mean_stats,
        &second_stats,
        n_t,
        m,
        grid,
        n,
    ))
}

/// Var[X] = E[Var(X | aggregated)] + Var(E[X | aggregated])
///        = E[conditional second moment] - (E[conditional mean])^2.
fn total_variance_stats(
    mean_stats: &Welford,
    second_stats: &Welford,
    n_t: usize,
    m: usize,
    grid: &[f64],
    n: usize,
) -> EnsembleStats {
    let mut mean = Vec::with_capacity(n_t);
    let mut std = Vec::with_capacity(n_t);
    for t in 0..n_t {
        let mu: Vec<f64> = (0..m).map(|k| mean_stats.mean[t * m + k]).collect();
        std.push(
            (0..m)
                .map(|k| {
                    let e2 = second_stats.mean[t * m + k];
                    (e2 - mu[k] * mu[k]).max(0.0).sqrt()
                })
                .collect(),
        );
        mean.push(mu);
    }
    EnsembleStats {
        grid: grid.to_vec(),
        mean,
        std,
        realization_count: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate, stationary};
    use crate::fixtures;
    use crate::network::parse_network;
    use crate::reduction::reduce_network;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identical_seeds_identical_paths() {
        let net = parse_network(fixtures::ENZYME).unwrap();
        let a = ssa_exact(&net, &net.initial_state, 2.0, 99).unwrap();
        let b = ssa_exact(&net, &net.initial_state, 2.0, 99).unwrap();
        assert_eq!(a.jump_times, b.jump_times);
        assert_eq!(a.states, b.states);
        let c = ssa_exact(&net, &net.initial_state, 2.0, 100).unwrap();
        assert_ne!(a.jump_times, c.jump_times);
    }

    #[test]
    fn jumps_follow_positive_propensity_reactions() {
        let net = parse_network(fixtures::TRIANGULAR).unwrap();
        let path = ssa_exact(&net, &net.initial_state, 50.0, 7).unwrap();
        assert!(path.jump_times.windows(2).all(|w| w[1] > w[0]));
        for w in path.states.windows(2) {
            let (src, dst) = (&w[0], &w[1]);
            let matched = (0..net.reaction_count()).any(|l| {
                let d = net.delta(l);
                propensity(&net, src, l) > 0.0
                    && src
                        .iter()
                        .zip(&d)
                        .map(|(&x, &dd)| x as i64 + dd)
                        .eq(dst.iter().map(|&x| x as i64))
            });
            assert!(matched, "{src:?} -> {dst:?}");
        }
    }

    #[test]
    fn absorbing_state_ends_path() {
        let net = parse_network("species: A,B\nr1: A -> B rate=5 slow\ninit: A=1\n").unwrap();
        let path = ssa_exact(&net, &[1, 0], 1e6, 3).unwrap();
        assert_eq!(path.states.last().unwrap(), &vec![0, 1]);
        assert_eq!(path.states.len(), 2);
        assert!(!path.truncated);
    }

    #[test]
    fn cap_violation_truncates() {
        let net = parse_network(
            "species: A\nr1: 0 -> A rate=100 slow\nr2: A -> 0 rate=0.001 slow\ninit: A=0\ncap: A=5\n",
        )
        .unwrap();
        let path = ssa_exact(&net, &[0], 1e3, 11).unwrap();
        assert!(path.truncated);
        assert!(path.states.iter().all(|s| s[0] <= 5));
    }

    #[test]
    fn mean_first_jump_time_matches_total_rate() {
        // A <-> B at (100, 1): total propensity 1.1.
        let net = parse_network(fixtures::AB).unwrap();
        let mut acc = 0.0;
        let n = 4000;
        for seed in 0..n {
            let path = ssa_exact(&net, &[100, 1], 100.0, seed).unwrap();
            acc += path.jump_times[1];
        }
        let mean = acc / n as f64;
        // Standard error of an exponential(1.1) mean over 4000 draws.
        let se = (1.0 / 1.1) / (n as f64).sqrt();
        assert!((mean - 1.0 / 1.1).abs() < 4.0 * se, "mean {mean}");
    }

    #[test]
    fn slow_ssa_occupancies_match_reduced_stationary() {
        let red =
            reduce_network(&fixtures::triangular(2, [10.0, 10.0, 0.4, 0.3, 0.2, 0.1])).unwrap();
        let t_end = 4000.0;
        let path = ssa_slow(&red.reduced, 0, t_end, 42).unwrap();
        let mut occupancy = vec![0.0f64; red.reduced.generator.dim()];
        for (j, &t) in path.jump_times.iter().enumerate() {
            let until = path.jump_times.get(j + 1).copied().unwrap_or(t_end);
            occupancy[path.states[j]] += until - t;
        }
        for o in occupancy.iter_mut() {
            *o /= t_end;
        }
        let pi = stationary(&red.reduced.generator).unwrap().remove(0);
        for (a, b) in occupancy.iter().zip(&pi) {
            assert!((a - b).abs() < 0.05, "occupancy {a} vs stationary {b}");
        }
    }

    #[test]
    fn absorbing_aggregated_state_stops_path() {
        // One-directional slow step between two fast pairs.
        let net = parse_network(
            "species: A,B,C,D\nr1: A <-> B rate=9 rrate=3 fast\nr2: C <-> D rate=5 rrate=5 fast\nr3: B -> C rate=0.2 slow\ninit: A=1\n",
        )
        .unwrap();
        let red = reduce_network(&net).unwrap();
        let path = ssa_slow(&red.reduced, 0, 1e4, 5).unwrap();
        assert_eq!(path.states.len(), 2);
        let last = *path.states.last().unwrap();
        assert_eq!(red.reduced.generator.column(last).len(), 0);
    }

    #[test]
    fn ensemble_single_realization_has_zero_std() {
        let net = parse_network(fixtures::AB).unwrap();
        let grid = [0.5, 1.0, 2.0];
        let stats = ensemble_exact(&net, &[100, 1], &grid, 1, 7).unwrap();
        assert_eq!(stats.realization_count, 1);
        for t in 0..grid.len() {
            for k in 0..2 {
                assert_eq!(stats.std[t][k], 0.0);
            }
        }
        // And it equals the single path sampled on the grid.
        let path = ssa_exact(&net, &[100, 1], 2.0, PathRngStreamSeed(7, 0).resolve()).unwrap();
        let value_at = |t: f64, k: usize| -> f64 {
            let mut v = path.states[0][k] as f64;
            for (j, &tj) in path.jump_times.iter().enumerate() {
                if tj <= t {
                    v = path.states[j][k] as f64;
                }
            }
            v
        };
        for (ti, &t) in grid.iter().enumerate() {
            for k in 0..2 {
                assert_eq!(stats.mean[ti][k], value_at(t, k));
            }
        }
    }

    /// Ensemble realization i uses stream base + i; mirror that here.
    struct PathRngStreamSeed(u64, u64);
    impl PathRngStreamSeed {
        fn resolve(&self) -> u64 {
            self.0.wrapping_add(self.1)
        }
    }

    #[test]
    fn exact_ensemble_matches_master_equation() {
        let net = parse_network(fixtures::AB).unwrap();
        let ex = crate::statespace::explore(&net).unwrap();
        let grid = [1.0, 3.0];
        let n = 800;
        let stats = ensemble_exact(&net, &[100, 1], &grid, n, 2024).unwrap();
        let mut p0 = vec![0.0; ex.space.len()];
        p0[ex.space.index_of(&[100, 1]).unwrap()] = 1.0;
        let traj = integrate(&ex.split.full, &p0, &grid).unwrap();
        for (ti, p) in traj.distributions.iter().enumerate() {
            let mean_a: f64 = p
                .iter()
                .zip(&ex.space.states)
                .map(|(&q, s)| q * s[0] as f64)
                .sum();
            let se = stats.std[ti][0] / (n as f64).sqrt();
            assert!(
                (stats.mean[ti][0] - mean_a).abs() <= 4.0 * se.max(1e-6),
                "t={} mc={} exact={}",
                grid[ti],
                stats.mean[ti][0],
                mean_a
            );
        }
    }

    #[test]
    fn otf_reducer_matches_precomputed_reduction() {
        // The on-the-fly simplex rates must agree with the global reduced
        // generator entries for the triangular system.
        let net = fixtures::triangular(2, [10.0, 10.0, 0.4, 0.3, 0.2, 0.1]);
        let red = reduce_network(&net).unwrap();
        let mut otf = OnTheFlyReducer::new(&net).unwrap();
        let mut rng = PathRng::new(1);
        let s0 = otf.absorb(&[2, 0, 0], &mut rng).unwrap();
        // Total outgoing rate equals -K~[0,0].
        assert_abs_diff_eq!(
            s0.total_rate,
            -red.reduced.generator.get(0, 0),
            epsilon = 1e-12
        );
        // Conditional moments match the aggregated state's.
        let moments =
            crate::reduction::reduced_moments(&red.pair, &red.space, &[1.0, 0.0, 0.0]).unwrap();
        for k in 0..3 {
            assert_abs_diff_eq!(s0.cond_mean[k], moments[k].0, epsilon = 1e-12);
        }
        assert_eq!(s0.ntilde, vec![2, 0]);
    }

    #[test]
    fn otf_ensemble_agrees_with_precomputed_slow_ensemble() {
        let net = parse_network(fixtures::ENZYME).unwrap();
        let red = reduce_network(&net).unwrap();
        let grid = [2.0, 5.0];
        let n = 300;
        let init_agg = {
            // Aggregated state containing the initial state.
            let s0 = red.space.index_of(&net.initial_state).unwrap();
            let scc = red.structure.scc_of_state[s0];
            red.pair
                .aggregated
                .iter()
                .find(|a| a.scc_id == scc)
                .expect("initial state is absorbing here")
                .index
        };
        let pre = ensemble_slow(&red.reduced, &red.space, init_agg, &grid, n, 77).unwrap();
        let otf = ensemble_slow_otf(&net, &net.initial_state, &grid, n, 77).unwrap();
        let p_idx = net.species_index("P").unwrap();
        for t in 0..grid.len() {
            let se = (pre.std[t][p_idx].powi(2) / n as f64 + otf.std[t][p_idx].powi(2) / n as f64)
                .sqrt();
            assert!(
                (pre.mean[t][p_idx] - otf.mean[t][p_idx]).abs() <= 4.0 * se.max(1e-9),
                "t={} pre={} otf={}",
                grid[t],
                pre.mean[t][p_idx],
                otf.mean[t][p_idx]
            );
        }
    }

    #[test]
    fn motor_slow_ssa_cw_fraction() {
        let p = fixtures::MotorParams::default();
        let red = reduce_network(&fixtures::motor(p, true)).unwrap();
        let k_plus = red.reduced.generator.get(1, 0);
        let k_minus = red.reduced.generator.get(0, 1);
        let expected_cw = k_minus / (k_plus + k_minus);
        let t_end = 30_000.0;
        let path = ssa_slow(&red.reduced, 0, t_end, 13).unwrap();
        let mut cw_time = 0.0;
        for (j, &t) in path.jump_times.iter().enumerate() {
            let until = path.jump_times.get(j + 1).copied().unwrap_or(t_end);
            if path.states[j] == 0 {
                cw_time += until - t;
            }
        }
        let frac = cw_time / t_end;
        assert!(
            (frac - expected_cw).abs() < 0.04,
            "fraction {frac} vs {expected_cw}"
        );
    }
}
