//! Slow-scale reduction: invariant distributions of the fast dynamics, the
//! projection pair (L, Pi), the reduced Markov generator LK^sPi over
//! aggregated states, and moments of lifted distributions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::faststructure::{FastSimplex, FastStructure};
use crate::statespace::{Generator, GeneratorBuilder, SplitGenerator, StateSpace};

/// Relative tolerance for algebraic identities that the theory makes exact.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Absolute tolerance for non-negativity clips.
pub const CLIP_TOL: f64 = 1e-12;

/// Normalized steady-state probability of one absorbing strong component.
#[derive(Debug, Clone)]
pub struct InvariantDistribution {
    pub scc_id: usize,
    pub pi: Vec<f64>,
}

/// Solve K^{f,ab} pi = 0, sum(pi) = 1 on one absorbing block by dense LU with
/// the first balance row replaced by the normalization row.
pub fn invariant_distribution(block: &DMatrix<f64>, scc_id: usize) -> Result<InvariantDistribution> {
    let n = block.nrows();
    assert_eq!(n, block.ncols());
    if n == 1 {
        return Ok(InvariantDistribution {
            scc_id,
            pi: vec![1.0],
        });
    }
    let mut bordered = block.clone();
    for c in 0..n {
        bordered[(0, c)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[0] = 1.0;
    let lu = bordered.lu();
    let Some(pi) = lu.solve(&rhs) else {
        return Err(Error::NumericalRankDeficiency {
            scc: scc_id,
            residual: f64::INFINITY,
        });
    };
    let scale = block.amax().max(1.0);
    let residual = (block * &pi).amax();
    if residual > IDENTITY_TOL * scale {
        return Err(Error::NumericalRankDeficiency {
            scc: scc_id,
            residual,
        });
    }
    let mut pi: Vec<f64> = pi.iter().copied().collect();
    for p in pi.iter_mut() {
        if *p < 0.0 {
            if *p < -CLIP_TOL {
                return Err(Error::NumericalRankDeficiency {
                    scc: scc_id,
                    residual: -*p,
                });
            }
            *p = 0.0;
        }
    }
    let sum: f64 = pi.iter().sum();
    for p in pi.iter_mut() {
        *p /= sum;
    }
    if pi.iter().any(|&p| p <= 0.0) {
        // A strongly connected finite chain has strictly positive pi.
        return Err(Error::NumericalRankDeficiency {
            scc: scc_id,
            residual: 0.0,
        });
    }
    Ok(InvariantDistribution { scc_id, pi })
}

/// One aggregated state of the reduced chain: an absorbing strong component
/// with its invariant distribution and invariant label.
#[derive(Debug, Clone)]
pub struct AggregatedState {
    pub index: usize,
    pub scc_id: usize,
    pub component: usize,
    /// Smallest member state of the absorbing scc.
    pub representative: usize,
    /// Member states of the absorbing scc (ascending), aligned with `pi`.
    pub member_states: Vec<usize>,
    pub pi: Vec<f64>,
    /// ntilde = A^f n of the representative; empty until labels are attached.
    pub ntilde: Vec<i64>,
}

/// The biorthogonal projection pair: Pi carries invariant distributions
/// (columns), L carries absorption probabilities (rows); L Pi = I.
#[derive(Debug, Clone)]
pub struct ProjectionPair {
    /// n_s x n_f.
    pub pi: DMatrix<f64>,
    /// n_f x n_s.
    pub l: DMatrix<f64>,
    pub aggregated: Vec<AggregatedState>,
}

/// Maximum deviations of the identities the projections must satisfy.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionResiduals {
    pub l_pi: f64,
    pub kf_pi: f64,
    pub l_kf: f64,
    pub l_colsum: f64,
}

impl ProjectionPair {
    pub fn aggregated_count(&self) -> usize {
        self.aggregated.len()
    }

    pub fn identity_residuals(&self, fast: &Generator) -> ProjectionResiduals {
        let n_f = self.aggregated.len();
        let n_s = self.pi.nrows();
        let mut l_pi = (&self.l * &self.pi - DMatrix::<f64>::identity(n_f, n_f)).amax();
        if n_f == 0 {
            l_pi = 0.0;
        }
        // K^f Pi, column by column through the sparse generator.
        let mut kf_pi = 0.0f64;
        for b in 0..n_f {
            let col: Vec<f64> = (0..n_s).map(|s| self.pi[(s, b)]).collect();
            for v in fast.mat_vec(&col) {
                kf_pi = kf_pi.max(v.abs());
            }
        }
        // L K^f: (L K^f)[a, j] = sum_i L[a, i] K^f[i, j].
        let mut l_kf = 0.0f64;
        for j in 0..n_s {
            for a in 0..n_f {
                let mut acc = self.l[(a, j)] * fast.diagonal()[j];
                for &(i, v) in fast.column(j) {
                    acc += self.l[(a, i)] * v;
                }
                l_kf = l_kf.max(acc.abs());
            }
        }
        let mut l_colsum = 0.0f64;
        for j in 0..n_s {
            let s: f64 = (0..n_f).map(|a| self.l[(a, j)]).sum();
            l_colsum = l_colsum.max((s - 1.0).abs());
        }
        ProjectionResiduals {
            l_pi,
            kf_pi,
            l_kf,
            l_colsum,
        }
    }

    /// Attach ntilde labels from the fast simplexes (index-aligned: one
    /// simplex per absorbing scc in the same canonical order).
    pub fn attach_labels(&mut self, simplexes: &[FastSimplex]) {
        assert_eq!(simplexes.len(), self.aggregated.len());
        for (agg, simplex) in self.aggregated.iter_mut().zip(simplexes) {
            assert_eq!(agg.scc_id, simplex.absorbing_scc);
            agg.ntilde = simplex.label.clone();
        }
    }
}

/// Build L and Pi from the classified fast structure.
///
/// Per component: Pi columns put the invariant distribution on each absorbing
/// scc; L rows start as indicators over the absorbing sccs and are extended
/// to internal and source states by the linear solves for the A and B blocks
/// (never by explicit inversion).
pub fn build_projections(
    structure: &FastStructure,
    split: &SplitGenerator,
) -> Result<ProjectionPair> {
    let fast = &split.fast;
    let n_s = fast.dim();
    let n_f = structure.aggregated_count();
    let mut pi = DMatrix::<f64>::zeros(n_s, n_f);
    let mut l = DMatrix::<f64>::zeros(n_f, n_s);
    let mut aggregated: Vec<AggregatedState> = Vec::with_capacity(n_f);

    // Aggregated index of each absorbing scc, in canonical order.
    let mut agg_of_scc = std::collections::HashMap::new();
    for (idx, &sid) in structure.absorbing_sccs.iter().enumerate() {
        agg_of_scc.insert(sid, idx);
    }

    for comp in &structure.components {
        // Local states in canonical order: absorbing sccs, internals, sources.
        let mut local: Vec<usize> = Vec::with_capacity(comp.members.len());
        let mut ab_ranges: Vec<(usize, std::ops::Range<usize>)> = Vec::new();
        for &sid in &comp.absorbing {
            let start = local.len();
            local.extend_from_slice(&structure.sccs[sid].members);
            ab_ranges.push((sid, start..local.len()));
        }
        let in_start = local.len();
        for &sid in &comp.internal {
            local.extend_from_slice(&structure.sccs[sid].members);
        }
        let so_start = local.len();
        for &sid in &comp.source {
            local.extend_from_slice(&structure.sccs[sid].members);
        }
        let m_i = local.len();
        let m_ab = in_start;
        let m_in = so_start - in_start;
        let m_so = m_i - so_start;
        let q = comp.absorbing.len();

        let kf_local = fast.dense_block(&local, &local);

        // Invariant distribution per absorbing scc; scatter into Pi.
        for (sid, range) in &ab_ranges {
            let agg_index = agg_of_scc[sid];
            let block = kf_local.view((range.start, range.start), (range.len(), range.len()));
            let inv = invariant_distribution(&block.into_owned(), *sid)?;
            for (k, &p) in inv.pi.iter().enumerate() {
                pi[(local[range.start + k], agg_index)] = p;
            }
            let members = structure.sccs[*sid].members.clone();
            aggregated.push(AggregatedState {
                index: agg_index,
                scc_id: *sid,
                component: comp.id,
                representative: members[0],
                member_states: members,
                pi: inv.pi,
            ntilde: Vec::new(),
            });
        }

        // L rows, local: [indicator | A | B].
        let mut l_local = DMatrix::<f64>::zeros(q, m_i);
        for (row, (_, range)) in ab_ranges.iter().enumerate() {
            for k in range.clone() {
                l_local[(row, k)] = 1.0;
            }
        }
        if m_in > 0 {
            // A K^{f,in} = -Ltilde K^{f,ab,in}  =>  (K^{f,in})^T A^T = -(K^{f,ab,in})^T Ltilde^T.
            let k_in = kf_local.view((in_start, in_start), (m_in, m_in)).into_owned();
            let k_ab_in = kf_local.view((0, in_start), (m_ab, m_in)).into_owned();
            let ltilde = l_local.view((0, 0), (q, m_ab)).into_owned();
            let rhs = -(k_ab_in.transpose() * ltilde.transpose());
            let lu = k_in.transpose().lu();
            let Some(at) = lu.solve(&rhs) else {
                return Err(Error::SingularInternalBlock {
                    component: comp.id,
                    block: "internal",
                });
            };
            let a = at.transpose();
            check_solve_residual(&a, &k_in, &(-(ltilde * k_ab_in)), comp.id, "internal")?;
            for r in 0..q {
                for c in 0..m_in {
                    l_local[(r, in_start + c)] = a[(r, c)];
                }
            }
        }
        if m_so > 0 {
            // B K^{f,so} = -(Ltilde K^{f,ab,so} + A K^{f,in,so}).
            let k_so = kf_local.view((so_start, so_start), (m_so, m_so)).into_owned();
            let k_ab_so = kf_local.view((0, so_start), (m_ab, m_so)).into_owned();
            let ltilde = l_local.view((0, 0), (q, m_ab)).into_owned();
            let mut rhs_rows = ltilde * k_ab_so;
            if m_in > 0 {
                let k_in_so = kf_local.view((in_start, so_start), (m_in, m_so)).into_owned();
                let a = l_local.view((0, in_start), (q, m_in)).into_owned();
                rhs_rows += a * k_in_so;
            }
            let lu = k_so.transpose().lu();
            let Some(bt) = lu.solve(&(-rhs_rows.transpose())) else {
                return Err(Error::SingularInternalBlock {
                    component: comp.id,
                    block: "source",
                });
            };
            let b = bt.transpose();
            check_solve_residual(&b, &k_so, &(-rhs_rows), comp.id, "source")?;
            for r in 0..q {
                for c in 0..m_so {
                    l_local[(r, so_start + c)] = b[(r, c)];
                }
            }
        }

        for (row, (sid, _)) in ab_ranges.iter().enumerate() {
            let agg_index = agg_of_scc[sid];
            for (k, &s) in local.iter().enumerate() {
                l[(agg_index, s)] = l_local[(row, k)];
            }
        }
    }

    aggregated.sort_by_key(|a| a.index);
    let pair = ProjectionPair { pi, l, aggregated };

    let res = pair.identity_residuals(fast);
    let scale = fast.norm_max().max(1.0);
    for (which, residual, tol) in [
        ("L Pi = I", res.l_pi, IDENTITY_TOL),
        ("K^f Pi = 0", res.kf_pi, IDENTITY_TOL * scale),
        ("L K^f = 0", res.l_kf, IDENTITY_TOL * scale),
        ("column sums of L = 1", res.l_colsum, IDENTITY_TOL),
    ] {
        if residual > tol {
            return Err(Error::ProjectionIdentity {
                which,
                residual,
                tol,
            });
        }
    }
    Ok(pair)
}

fn check_solve_residual(
    x: &DMatrix<f64>,
    a: &DMatrix<f64>,
    rhs: &DMatrix<f64>,
    component: usize,
    block: &'static str,
) -> Result<()> {
    let res = (x * a - rhs).amax();
    let scale = a.amax().max(1.0);
    if !res.is_finite() || res > 1e-8 * scale {
        return Err(Error::SingularInternalBlock { component, block });
    }
    Ok(())
}

/// A non-zero off-diagonal entry of the reduced generator, with the change of
/// the invariant label it induces.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedJump {
    pub from: usize,
    pub to: usize,
    pub delta_ntilde: Vec<i64>,
}

/// The reduced slow-scale chain over aggregated states.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub generator: Generator,
    pub aggregated: Vec<AggregatedState>,
    pub slow_stoich: Vec<ReducedJump>,
}

/// K~ = L K^s Pi. Column sums are checked against tolerance and then zeroed
/// exactly onto the diagonal; off-diagonals may only be clipped within the
/// roundoff band, anything worse is an error (the Markov property is a
/// theorem, not an approximation).
pub fn reduced_generator(pair: &ProjectionPair, slow: &Generator) -> Result<ReducedSystem> {
    let n_s = slow.dim();
    let n_f = pair.aggregated_count();
    if pair.pi.nrows() != n_s {
        return Err(Error::DimensionMismatch {
            expected: pair.pi.nrows(),
            got: n_s,
        });
    }
    // M = K^s Pi via the sparse triplets.
    let mut m = DMatrix::<f64>::zeros(n_s, n_f);
    for (i, j, v) in slow.triplets() {
        for b in 0..n_f {
            m[(i, b)] += v * pair.pi[(j, b)];
        }
    }
    let ktilde = &pair.l * m;

    let scale = ktilde.amax().max(1.0);
    for j in 0..n_f {
        let col_sum: f64 = (0..n_f).map(|i| ktilde[(i, j)]).sum();
        if col_sum.abs() > IDENTITY_TOL * scale {
            return Err(Error::NotMarkov {
                msg: format!("column {j} sums to {col_sum:.3e}"),
            });
        }
        for i in 0..n_f {
            if i != j && ktilde[(i, j)] < -CLIP_TOL * scale {
                return Err(Error::NotMarkov {
                    msg: format!("entry ({i}, {j}) = {:.3e} is negative", ktilde[(i, j)]),
                });
            }
        }
    }

    let mut builder = GeneratorBuilder::new(n_f);
    for j in 0..n_f {
        for i in 0..n_f {
            if i != j && ktilde[(i, j)] > 0.0 {
                builder.add(i, j, ktilde[(i, j)]);
            }
        }
    }
    let generator = builder.finish();

    let slow_stoich = generator
        .triplets()
        .filter(|&(i, j, _)| i != j)
        .map(|(i, j, _)| ReducedJump {
            from: j,
            to: i,
            delta_ntilde: pair.aggregated[i]
                .ntilde
                .iter()
                .zip(&pair.aggregated[j].ntilde)
                .map(|(&a, &b)| a - b)
                .collect(),
        })
        .collect();

    Ok(ReducedSystem {
        generator,
        aggregated: pair.aggregated.clone(),
        slow_stoich,
    })
}

/// Lift an aggregated distribution back to the full state space: p = Pi p~.
pub fn lift_distribution(pair: &ProjectionPair, p_tilde: &[f64]) -> Result<Vec<f64>> {
    let n_f = pair.aggregated_count();
    if p_tilde.len() != n_f {
        return Err(Error::DimensionMismatch {
            expected: n_f,
            got: p_tilde.len(),
        });
    }
    let sum: f64 = p_tilde.iter().sum();
    if p_tilde.iter().any(|&p| p < -CLIP_TOL) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!(
            "aggregated distribution invalid (sum {sum})"
        )));
    }
    let mut p = vec![0.0; pair.pi.nrows()];
    for (s, slot) in p.iter_mut().enumerate() {
        let mut acc = 0.0;
        for b in 0..n_f {
            acc += pair.pi[(s, b)] * p_tilde[b];
        }
        *slot = acc.max(0.0);
    }
    Ok(p)
}

/// Per-species mean and variance of the distribution Pi p~, evaluated from
/// the aggregated probabilities and the per-scc invariant distributions
/// without materializing the lifted vector.
pub fn reduced_moments(
    pair: &ProjectionPair,
    space: &StateSpace,
    p_tilde: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if p_tilde.len() != pair.aggregated_count() {
        return Err(Error::DimensionMismatch {
            expected: pair.aggregated_count(),
            got: p_tilde.len(),
        });
    }
    let m = space.states.first().map_or(0, |s| s.len());
    let mut mean = vec![0.0; m];
    let mut second = vec![0.0; m];
    for (agg, &pt) in pair.aggregated.iter().zip(p_tilde) {
        if pt == 0.0 {
            continue;
        }
        for (state_idx, &pij) in agg.member_states.iter().zip(&agg.pi) {
            let w = pt * pij;
            for (k, &n) in space.states[*state_idx].iter().enumerate() {
                let x = n as f64;
                mean[k] += w * x;
                second[k] += w * x * x;
            }
        }
    }
    Ok(mean
        .into_iter()
        .zip(second)
        .map(|(mu, s2)| (mu, (s2 - mu * mu).max(0.0)))
        .collect())
}

/// Result of the conditional-expectation cross-check of the reduced rates.
#[derive(Debug, Clone)]
pub struct ConditionalRateCheck {
    pub max_discrepancy: f64,
    /// Components that are not strongly connected; pairs with these as the
    /// source were skipped.
    pub skipped_components: Vec<usize>,
}

/// For strongly connected fast components the reduced rate equals the slow
/// rate conditioned on the fast invariant distribution. Re-derive every
/// off-diagonal entry by brute-force double summation over the slow triplets
/// and compare against L K^s Pi.
pub fn conditional_rate_check(
    structure: &FastStructure,
    split: &SplitGenerator,
    pair: &ProjectionPair,
) -> Result<ConditionalRateCheck> {
    let reduced = reduced_generator(pair, &split.slow)?;
    let n_f = pair.aggregated_count();
    let strongly_connected: Vec<bool> = structure
        .components
        .iter()
        .map(|c| c.is_strongly_connected())
        .collect();
    let skipped_components: Vec<usize> = structure
        .components
        .iter()
        .filter(|c| !c.is_strongly_connected())
        .map(|c| c.id)
        .collect();

    // Aggregated index by component for strongly connected components.
    let mut agg_of_component = std::collections::HashMap::new();
    for agg in &pair.aggregated {
        if strongly_connected[agg.component] {
            agg_of_component.insert(agg.component, agg.index);
        }
    }
    // Brute-force sums over slow transitions p <- q.
    let mut brute = DMatrix::<f64>::zeros(n_f, n_f);
    for (p, q, v) in split.slow.triplets() {
        if p == q {
            continue;
        }
        let (cq, cp) = (
            structure.component_of_state[q],
            structure.component_of_state[p],
        );
        if cq == cp || !strongly_connected[cq] || !strongly_connected[cp] {
            continue;
        }
        let (b, a) = (agg_of_component[&cq], agg_of_component[&cp]);
        let agg_b = &pair.aggregated[b];
        let pos = agg_b
            .member_states
            .binary_search(&q)
            .expect("state in its component");
        brute[(a, b)] += v * agg_b.pi[pos];
    }

    let mut max_discrepancy = 0.0f64;
    for b in 0..n_f {
        if !strongly_connected[pair.aggregated[b].component] {
            continue;
        }
        for a in 0..n_f {
            if a == b || !strongly_connected[pair.aggregated[a].component] {
                continue;
            }
            let diff = (brute[(a, b)] - reduced.generator.get(a, b)).abs();
            max_discrepancy = max_discrepancy.max(diff);
        }
    }
    Ok(ConditionalRateCheck {
        max_discrepancy,
        skipped_components,
    })
}

/// Everything the reduction produces for a network, bundled for convenience.
pub struct Reduction {
    pub space: StateSpace,
    pub split: SplitGenerator,
    pub structure: FastStructure,
    pub simplexes: Vec<FastSimplex>,
    pub pair: ProjectionPair,
    pub reduced: ReducedSystem,
    pub afast: Vec<Vec<i64>>,
}

/// Explore, classify, project and reduce a network in one call.
pub fn reduce_network(net: &crate::network::ReactionNetwork) -> Result<Reduction> {
    let ex = crate::statespace::explore(net)?;
    let structure = crate::faststructure::analyze(&ex.split.fast);
    let afast = crate::network::fast_invariant_matrix(net)?;
    let simplexes =
        crate::faststructure::fast_simplexes(&structure, &ex.split.fast, &ex.space, &afast);
    let mut pair = build_projections(&structure, &ex.split)?;
    pair.attach_labels(&simplexes);
    let reduced = reduced_generator(&pair, &ex.split.slow)?;
    Ok(Reduction {
        space: ex.space,
        split: ex.split,
        structure,
        simplexes,
        pair,
        reduced,
        afast,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::network::parse_network;
    use approx::assert_abs_diff_eq;

    const K: [f64; 6] = [10.0, 10.0, 0.1, 0.1, 0.1, 0.1];

    fn triangular_reduction() -> Reduction {
        reduce_network(&fixtures::triangular(2, K)).unwrap()
    }

    #[test]
    fn triangular_invariant_distributions_match_closed_forms() {
        let red = triangular_reduction();
        let [k1, k2, ..] = K;
        let denom = (k1 + k2) * (k1 + k2);
        // Component 1: states (2,0,0), (1,1,0), (0,2,0).
        let agg = &red.pair.aggregated[0];
        let expect = [k2 * k2 / denom, 2.0 * k1 * k2 / denom, k1 * k1 / denom];
        let states: Vec<&Vec<u64>> = agg
            .member_states
            .iter()
            .map(|&s| &red.space.states[s])
            .collect();
        for (i, target) in [[2u64, 0, 0], [1, 1, 0], [0, 2, 0]].iter().enumerate() {
            let pos = states.iter().position(|s| s.as_slice() == target).unwrap();
            assert_abs_diff_eq!(agg.pi[pos], expect[i], epsilon = 1e-14);
        }
        // Component 2: (1,0,1), (0,1,1) with pi = (k2, k1)/(k1+k2).
        let agg = &red.pair.aggregated[1];
        let states: Vec<&Vec<u64>> = agg
            .member_states
            .iter()
            .map(|&s| &red.space.states[s])
            .collect();
        let pos = states
            .iter()
            .position(|s| s.as_slice() == [1, 0, 1])
            .unwrap();
        assert_abs_diff_eq!(agg.pi[pos], k2 / (k1 + k2), epsilon = 1e-14);
        // Component 3 is the isolated state (0,0,2).
        assert_eq!(red.pair.aggregated[2].pi, vec![1.0]);
        // L is all ones here (every component strongly connected).
        for agg in &red.pair.aggregated {
            for &s in &red.pair.aggregated[agg.index].member_states {
                assert_abs_diff_eq!(red.pair.l[(agg.index, s)], 1.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn triangular_reduced_generator_closed_forms() {
        let red = triangular_reduction();
        let [k1, k2, k3, k4, k5, k6] = K;
        let g = &red.reduced.generator;
        assert_eq!(g.dim(), 3);
        let expect_21 = 2.0 * (k1 * k3 + k2 * k6) / (k1 + k2);
        assert_abs_diff_eq!(g.get(1, 0), expect_21, epsilon = 1e-12);
        assert_abs_diff_eq!(g.get(1, 0), 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(g.get(0, 1), k4 + k5, epsilon = 1e-12);
        assert_abs_diff_eq!(
            g.get(2, 1),
            (k6 * k2 + k3 * k1) / (k1 + k2),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(g.get(1, 2), 2.0 * (k4 + k5), epsilon = 1e-12);
        assert_eq!(g.get(2, 0), 0.0);
        assert_eq!(g.get(0, 2), 0.0);
        // Aggregated labels ntilde = (A+B, C).
        let labels: Vec<Vec<i64>> = red.reduced.aggregated.iter().map(|a| a.ntilde.clone()).collect();
        assert_eq!(labels, vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
    }

    #[test]
    fn network3_middle_component_l_rows() {
        // Distinct branching rates so a row swap would be caught.
        let text = "species: A, B, C, D, E, F, G\n\
            reaction k1: A -> B rate=10.0 fast\n\
            reaction k2: B -> C rate=2.0 fast\n\
            reaction k4: B -> D rate=6.0 fast\n\
            reaction k6: D -> E rate=10.0 fast\n\
            reaction k7: E -> D rate=10.0 fast\n\
            reaction k8: C -> 2 F rate=0.1 slow\n\
            reaction k9: 2 F -> C rate=0.1 slow\n\
            reaction k10: 2 F -> G rate=10.0 fast\n\
            reaction k11: G -> 2 F rate=10.0 fast\n\
            init: A=1, F=2\n";
        let red = reduce_network(&parse_network(text).unwrap()).unwrap();
        let idx = |s: &[u64]| red.space.index_of(s).unwrap();
        let two_c = idx(&[0, 0, 2, 0, 0, 0, 0]);
        let c_d = idx(&[0, 0, 1, 1, 0, 0, 0]);
        let c_e = idx(&[0, 0, 1, 0, 1, 0, 0]);
        let b_c = idx(&[0, 1, 1, 0, 0, 0, 0]);
        let a_c = idx(&[1, 0, 1, 0, 0, 0, 0]);
        let agg_2c = red
            .pair
            .aggregated
            .iter()
            .find(|a| a.representative == two_c)
            .unwrap()
            .index;
        let agg_de = red
            .pair
            .aggregated
            .iter()
            .find(|a| a.representative == c_d.min(c_e))
            .unwrap()
            .index;
        let split_prob = 2.0 / (2.0 + 6.0);
        let l = &red.pair.l;
        assert_abs_diff_eq!(l[(agg_2c, two_c)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l[(agg_2c, c_d)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l[(agg_2c, c_e)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l[(agg_2c, b_c)], split_prob, epsilon = 1e-12);
        assert_abs_diff_eq!(l[(agg_2c, a_c)], split_prob, epsilon = 1e-12);
        assert_abs_diff_eq!(l[(agg_de, c_d)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l[(agg_de, c_e)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l[(agg_de, b_c)], 1.0 - split_prob, epsilon = 1e-12);
        assert_abs_diff_eq!(l[(agg_de, a_c)], 1.0 - split_prob, epsilon = 1e-12);
    }

    #[test]
    fn projection_identities_hold_on_fixtures() {
        for (name, text) in fixtures::ALL {
            if *name == "pfk" {
                continue; // state space beyond dense-projection scale
            }
            let net = parse_network(text).unwrap();
            if !net.has_fast() {
                continue;
            }
            let red = reduce_network(&net).unwrap_or_else(|e| panic!("{name}: {e}"));
            let res = red.pair.identity_residuals(&red.split.fast);
            let scale = red.split.fast.norm_max().max(1.0);
            assert!(res.l_pi <= 1e-10, "{name}: LPi {:.3e}", res.l_pi);
            assert!(res.kf_pi <= 1e-10 * scale, "{name}: KfPi {:.3e}", res.kf_pi);
            assert!(res.l_kf <= 1e-10 * scale, "{name}: LKf {:.3e}", res.l_kf);
            assert!(res.l_colsum <= 1e-10, "{name}: colsum {:.3e}", res.l_colsum);
        }
    }

    #[test]
    fn zero_slow_generator_reduces_to_zero() {
        let net = parse_network(
            "species: A,B\nr1: A -> B rate=3 fast\nr2: B -> A rate=1 fast\ninit: A=2\n",
        )
        .unwrap();
        let red = reduce_network(&net).unwrap();
        assert_eq!(red.reduced.generator.dim(), 1);
        assert_eq!(red.reduced.generator.get(0, 0), 0.0);
        assert!(red.reduced.slow_stoich.is_empty());
    }

    #[test]
    fn lift_distribution_properties() {
        let red = triangular_reduction();
        let p = lift_distribution(&red.pair, &[1.0, 0.0, 0.0]).unwrap();
        let [k1, k2, ..] = K;
        let denom = (k1 + k2) * (k1 + k2);
        let idx = red.space.index_of(&[1, 1, 0]).unwrap();
        assert_abs_diff_eq!(p[idx], 2.0 * k1 * k2 / denom, epsilon = 1e-14);
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);

        // Unit mass on the isolated aggregated state.
        let p = lift_distribution(&red.pair, &[0.0, 0.0, 1.0]).unwrap();
        let idx = red.space.index_of(&[0, 0, 2]).unwrap();
        assert_abs_diff_eq!(p[idx], 1.0, epsilon = 1e-14);

        // Uniform aggregated distribution stays normalized.
        let p = lift_distribution(&red.pair, &[1.0 / 3.0; 3]).unwrap();
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn reduced_moments_match_lifted_moments() {
        let red = triangular_reduction();
        let p_tilde = [0.5, 0.3, 0.2];
        let moments = reduced_moments(&red.pair, &red.space, &p_tilde).unwrap();
        let lifted = lift_distribution(&red.pair, &p_tilde).unwrap();
        for k in 0..3 {
            let mean: f64 = lifted
                .iter()
                .zip(&red.space.states)
                .map(|(&p, s)| p * s[k] as f64)
                .sum();
            let second: f64 = lifted
                .iter()
                .zip(&red.space.states)
                .map(|(&p, s)| p * (s[k] as f64).powi(2))
                .sum();
            assert_abs_diff_eq!(moments[k].0, mean, epsilon = 1e-12);
            assert_abs_diff_eq!(moments[k].1, second - mean * mean, epsilon = 1e-12);
        }
        // Point mass on a singleton absorbing state: mean = state, var = 0.
        let moments = reduced_moments(&red.pair, &red.space, &[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(moments[0].0, 0.0);
        assert_abs_diff_eq!(moments[2].0, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(moments[2].1, 0.0, epsilon = 1e-14);
        // Species A mean under point mass on aggregated state 1:
        // 2 k2 / (k1 + k2).
        let moments = reduced_moments(&red.pair, &red.space, &[1.0, 0.0, 0.0]).unwrap();
        let [k1, k2, ..] = K;
        assert_abs_diff_eq!(moments[0].0, 2.0 * k2 / (k1 + k2), epsilon = 1e-12);
    }

    #[test]
    fn conditional_rates_match_brute_force() {
        let red = triangular_reduction();
        let check = conditional_rate_check(&red.structure, &red.split, &red.pair).unwrap();
        assert!(check.skipped_components.is_empty());
        assert!(check.max_discrepancy <= 1e-12, "{}", check.max_discrepancy);

        // Zero slow rates: discrepancy identically zero.
        let net = parse_network(
            "species: A,B\nr1: A -> B rate=3 fast\nr2: B -> A rate=1 fast\ninit: A=2\n",
        )
        .unwrap();
        let red = reduce_network(&net).unwrap();
        let check = conditional_rate_check(&red.structure, &red.split, &red.pair).unwrap();
        assert_eq!(check.max_discrepancy, 0.0);

        // Components with sources are reported as skipped.
        let red = reduce_network(&parse_network(fixtures::NETWORK3).unwrap()).unwrap();
        let check = conditional_rate_check(&red.structure, &red.split, &red.pair).unwrap();
        assert!(!check.skipped_components.is_empty());
    }

    #[test]
    fn rank_deficient_block_is_rejected() {
        // A 2x2 zero block is two isolated states, not one absorbing scc.
        let block = DMatrix::<f64>::zeros(2, 2);
        assert!(matches!(
            invariant_distribution(&block, 0),
            Err(Error::NumericalRankDeficiency { .. })
        ));
    }

    #[test]
    fn motor_reduces_to_two_state_switch() {
        let p = fixtures::MotorParams::default();
        let red = reduce_network(&fixtures::motor(p, true)).unwrap();
        assert_eq!(red.reduced.generator.dim(), 2);
        // Constant switching rates: conditioning changes nothing.
        assert_abs_diff_eq!(red.reduced.generator.get(1, 0), p.alpha, epsilon = 1e-12);
        assert_abs_diff_eq!(red.reduced.generator.get(0, 1), p.beta, epsilon = 1e-12);
        // Rates reproduce the conditional-expectation sums over the binding
        // chain invariant distribution.
        let agg_cw = &red.pair.aggregated[0];
        let k_plus: f64 = agg_cw.pi.iter().map(|&pi| p.alpha * pi).sum();
        assert_abs_diff_eq!(red.reduced.generator.get(1, 0), k_plus, epsilon = 1e-12);
        let check = conditional_rate_check(&red.structure, &red.split, &red.pair).unwrap();
        assert!(check.max_discrepancy <= 1e-12);
    }

    #[test]
    fn network2_reduces_to_network3_when_reverse_rates_vanish() {
        // Setting the k3 and k5 rates to ~0 in network 2 must reproduce the
        // network 3 reduced matrix plus one extra all-zero row and column
        // (the absorbing component that only network 2 reaches).
        let text2 = fixtures::NETWORK2
            .replace("reaction k3: C -> B rate=0.1 slow", "reaction k3: C -> B rate=1e-300 slow")
            .replace("reaction k5: D -> B rate=0.1 slow", "reaction k5: D -> B rate=1e-300 slow");
        let red2 = reduce_network(&parse_network(&text2).unwrap()).unwrap();
        let red3 = reduce_network(&parse_network(fixtures::NETWORK3).unwrap()).unwrap();
        let g2 = &red2.reduced.generator;
        let g3 = &red3.reduced.generator;
        assert_eq!(g2.dim(), 6);
        assert_eq!(g3.dim(), 5);
        // Match aggregated states across the two reductions by their
        // representative full state vector.
        let map: Vec<Option<usize>> = red2
            .reduced
            .aggregated
            .iter()
            .map(|a2| {
                let rep2 = &red2.space.states[a2.representative];
                red3.reduced
                    .aggregated
                    .iter()
                    .find(|a3| &red3.space.states[a3.representative] == rep2)
                    .map(|a3| a3.index)
            })
            .collect();
        assert_eq!(map.iter().filter(|m| m.is_some()).count(), 5);
        for (i2, mi) in map.iter().enumerate() {
            for (j2, mj) in map.iter().enumerate() {
                match (mi, mj) {
                    (Some(i3), Some(j3)) => {
                        assert_abs_diff_eq!(
                            g2.get(i2, j2),
                            g3.get(*i3, *j3),
                            epsilon = 1e-10
                        );
                    }
                    _ => {
                        if i2 != j2 {
                            assert!(g2.get(i2, j2).abs() < 1e-250, "({i2},{j2})");
                        }
                    }
                }
            }
        }
    }
}
