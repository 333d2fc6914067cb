//! Time evolution of probability distributions: uniformized evaluation of
//! exp(Kt)p, stationary distributions per terminal class, full-vs-reduced
//! comparison, and the stationary moment identities.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::faststructure;
use crate::network::ReactionNetwork;
use crate::reduction::{reduced_moments, ProjectionPair};
use crate::statespace::{propensity, Generator, StateSpace};

/// Which space a trajectory lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Full(usize),
    Reduced(usize),
}

/// Probability vectors on an increasing time grid.
#[derive(Debug, Clone)]
pub struct DistributionTrajectory {
    pub times: Vec<f64>,
    pub distributions: Vec<Vec<f64>>,
    pub basis: Basis,
}

#[derive(Debug, Clone, Copy)]
pub struct IntegrateOptions {
    /// Absolute truncation error budget per grid step.
    pub tol: f64,
    /// Use the dense matrix-exponential path instead of uniformization.
    pub dense: bool,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            tol: 1e-9,
            dense: false,
        }
    }
}

/// Largest Poisson parameter per uniformization sub-step; keeps exp(-lambda)
/// representable and the series short.
const MAX_SUBSTEP_LAMBDA: f64 = 400.0;
/// Dense matrix exponentials are only sensible up to moderate dimensions.
pub const DENSE_LIMIT: usize = 2000;

fn validate_p0(dim: usize, p0: &[f64]) -> Result<()> {
    if p0.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: p0.len(),
        });
    }
    let sum: f64 = p0.iter().sum();
    if p0.iter().any(|&p| p < -1e-12) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!(
            "initial distribution invalid (sum {sum})"
        )));
    }
    Ok(())
}

/// p(t) = exp(Kt) p(0) on the given grid.
///
/// Uniformization: with P = I + K/Lambda (column-stochastic, non-negative),
/// exp(K dt) p is a Poisson(Lambda dt)-weighted mixture of P^j p. The series
/// is truncated once the remaining Poisson tail is below tolerance and the
/// result renormalized by the accumulated weight, so each step is accurate to
/// `tol` in l1 and stays a probability vector. Intervals with large
/// Lambda*dt are split so the Poisson weights stay representable.
pub fn integrate(k: &Generator, p0: &[f64], times: &[f64]) -> Result<DistributionTrajectory> {
    integrate_with(k, p0, times, &IntegrateOptions::default())
}

pub fn integrate_with(
    k: &Generator,
    p0: &[f64],
    times: &[f64],
    opts: &IntegrateOptions,
) -> Result<DistributionTrajectory> {
    validate_p0(k.dim(), p0)?;
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::Invalid(
            "time grid must be non-negative and increasing".into(),
        ));
    }
    if opts.dense && k.dim() > DENSE_LIMIT {
        return Err(Error::Invalid(format!(
            "dense integration limited to dimension {DENSE_LIMIT}"
        )));
    }

    let mut distributions = Vec::with_capacity(times.len());
    let mut p: Vec<f64> = p0.to_vec();
    let mut t_now = 0.0;
    let dense_k = opts.dense.then(|| k.to_dense());
    for &t in times {
        let dt = t - t_now;
        if dt > 0.0 {
            p = if let Some(kd) = &dense_k {
                dense_step(kd, &p, dt)
            } else {
                uniformized_step(k, &p, dt, opts.tol)
            };
            t_now = t;
        }
        distributions.push(p.clone());
    }
    Ok(DistributionTrajectory {
        times: times.to_vec(),
        distributions,
        basis: Basis::Full(k.dim()),
    })
}

fn dense_step(k: &DMatrix<f64>, p: &[f64], dt: f64) -> Vec<f64> {
    let e = (k * dt).exp();
    let v = e * DVector::from_column_slice(p);
    v.iter().map(|&x| x.max(0.0)).collect()
}

fn uniformized_step(k: &Generator, p: &[f64], dt: f64, tol: f64) -> Vec<f64> {
    let rate = k.max_exit_rate();
    if rate == 0.0 || dt == 0.0 {
        return p.to_vec();
    }
    let n_sub = ((rate * dt) / MAX_SUBSTEP_LAMBDA).ceil().max(1.0) as usize;
    let dt_sub = dt / n_sub as f64;
    let tol_sub = (tol / n_sub as f64).max(1e-16);
    let mut p = p.to_vec();
    for _ in 0..n_sub {
        p = poisson_mixture(k, rate, &p, rate * dt_sub, tol_sub);
    }
    p
}

/// One uniformization interval: sum_j Poisson(lambda; j) P^j p.
fn poisson_mixture(k: &Generator, rate: f64, p: &[f64], lambda: f64, tol: f64) -> Vec<f64> {
    let n = p.len();
    let mut work = p.to_vec();
    let mut weight = (-lambda).exp();
    let mut cum = weight;
    let mut out: Vec<f64> = work.iter().map(|&x| weight * x).collect();
    let mut j = 0u64;
    // Generous cap; the tail test is what normally terminates the loop.
    let cap = (lambda + 12.0 * lambda.sqrt() + 60.0) as u64;
    while 1.0 - cum > tol && j < 4 * cap {
        j += 1;
        // work = P work = work + (K work)/rate
        let kw = k.mat_vec(&work);
        for i in 0..n {
            work[i] = (work[i] + kw[i] / rate).max(0.0);
        }
        weight *= lambda / j as f64;
        cum += weight;
        for i in 0..n {
            out[i] += weight * work[i];
        }
    }
    // Renormalize the truncated mixture.
    for x in out.iter_mut() {
        *x /= cum;
    }
    out
}

/// One normalized stationary vector per terminal communicating class,
/// embedded into the full dimension. For an irreducible generator the result
/// is a single vector.
pub fn stationary(k: &Generator) -> Result<Vec<Vec<f64>>> {
    let structure = faststructure::analyze(k);
    let mut out = Vec::new();
    for scc in &structure.sccs {
        if scc.kind != faststructure::SccKind::Absorbing {
            continue;
        }
        if scc.members.len() > 10_000 {
            return Err(Error::Invalid(format!(
                "terminal class with {} states exceeds the dense solver",
                scc.members.len()
            )));
        }
        let block = k.dense_block(&scc.members, &scc.members);
        let inv = crate::reduction::invariant_distribution(&block, scc.id)?;
        let mut p = vec![0.0; k.dim()];
        for (&s, &v) in scc.members.iter().zip(&inv.pi) {
            p[s] = v;
        }
        let residual = k
            .mat_vec(&p)
            .into_iter()
            .fold(0.0f64, |a, x| a.max(x.abs()));
        let tol = 1e-10 * k.norm_max().max(1.0);
        if residual > tol {
            return Err(Error::NotStationary { residual, tol });
        }
        out.push(p);
    }
    Ok(out)
}

/// Per-species absolute moment differences, full vs reduced.
#[derive(Debug, Clone)]
pub struct SpeciesError {
    pub mean: f64,
    pub variance: f64,
}

/// Error report of a full-vs-reduced comparison.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    /// Per grid point: || L p(t) - p~(t) ||_inf over aggregated states.
    pub aggregated_linf: Vec<f64>,
    /// sup over the grid of `aggregated_linf`.
    pub sup_aggregated: f64,
    /// sup over the grid of per-species moment differences.
    pub per_species: Vec<SpeciesError>,
}

/// Compare a full trajectory against a reduced one on the same grid:
/// aggregate the full distribution through L and also compare species
/// means/variances (computed directly on the full side, through the
/// invariant distributions on the reduced side).
pub fn compare_full_reduced(
    full: &DistributionTrajectory,
    pair: &ProjectionPair,
    space: &StateSpace,
    reduced: &DistributionTrajectory,
) -> Result<ComparisonReport> {
    if full.times.len() != reduced.times.len()
        || full
            .times
            .iter()
            .zip(&reduced.times)
            .any(|(&a, &b)| (a - b).abs() > 1e-12 * a.abs().max(1.0))
    {
        return Err(Error::GridMismatch);
    }
    let n_f = pair.aggregated_count();
    let m = space.states.first().map_or(0, |s| s.len());
    let mut aggregated_linf = Vec::with_capacity(full.times.len());
    let mut per_species = vec![
        SpeciesError {
            mean: 0.0,
            variance: 0.0
        };
        m
    ];
    for (pf, pr) in full.distributions.iter().zip(&reduced.distributions) {
        let mut linf = 0.0f64;
        for a in 0..n_f {
            let lp: f64 = (0..pf.len()).map(|s| pair.l[(a, s)] * pf[s]).sum();
            linf = linf.max((lp - pr[a]).abs());
        }
        aggregated_linf.push(linf);

        let red_moments = reduced_moments(pair, space, pr)?;
        for k in 0..m {
            let mean: f64 = pf
                .iter()
                .zip(&space.states)
                .map(|(&p, s)| p * s[k] as f64)
                .sum();
            let second: f64 = pf
                .iter()
                .zip(&space.states)
                .map(|(&p, s)| p * (s[k] as f64).powi(2))
                .sum();
            let var = (second - mean * mean).max(0.0);
            per_species[k].mean = per_species[k].mean.max((mean - red_moments[k].0).abs());
            per_species[k].variance = per_species[k]
                .variance
                .max((var - red_moments[k].1).abs());
        }
    }
    Ok(ComparisonReport {
        sup_aggregated: aggregated_linf.iter().fold(0.0, |a, &x| a.max(x)),
        aggregated_linf,
        per_species,
    })
}

/// Residuals of the stationary moment identities: the first-moment balance
/// nuE E[R(n)] = 0 (per species, absolute value) and the max-norm of the
/// second-moment tensor identity.
#[derive(Debug, Clone)]
pub struct MomentResidual {
    pub first_order: Vec<f64>,
    pub second_order: f64,
}

/// Evaluate both identities by direct summation over the states, after
/// verifying that `p` is stationary for `k`.
pub fn moment_residuals(
    net: &ReactionNetwork,
    space: &StateSpace,
    k: &Generator,
    p: &[f64],
) -> Result<MomentResidual> {
    validate_p0(space.len(), p)?;
    let residual = k
        .mat_vec(p)
        .into_iter()
        .fold(0.0f64, |a, x| a.max(x.abs()));
    let tol = 1e-10 * k.norm_max().max(1.0);
    if residual > tol {
        return Err(Error::NotStationary { residual, tol });
    }
    let all: Vec<usize> = (0..space.len()).collect();
    Ok(weighted_moment_residuals(net, space, &all, p, false))
}

/// The fast-subsystem variant: identities restricted to the fast reactions,
/// expectations over one fast simplex with the given invariant weights.
pub fn fast_moment_residuals(
    net: &ReactionNetwork,
    space: &StateSpace,
    member_states: &[usize],
    pi: &[f64],
) -> MomentResidual {
    weighted_moment_residuals(net, space, member_states, pi, true)
}

fn weighted_moment_residuals(
    net: &ReactionNetwork,
    space: &StateSpace,
    states: &[usize],
    weights: &[f64],
    fast_only: bool,
) -> MomentResidual {
    let m = net.species_count();
    let reactions: Vec<usize> = (0..net.reaction_count())
        .filter(|&l| !fast_only || net.reactions[l].speed == crate::network::Speed::Fast)
        .collect();

    let mut first = vec![0.0f64; m];
    let mut tensor = vec![0.0f64; m * m];
    for &l in &reactions {
        let d = net.delta(l);
        let mut e_r = 0.0f64;
        let mut e_nr = vec![0.0f64; m];
        for (&s, &w) in states.iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            let rate = propensity(net, &space.states[s], l) * w;
            e_r += rate;
            for (k, &n) in space.states[s].iter().enumerate() {
                e_nr[k] += rate * n as f64;
            }
        }
        for i in 0..m {
            first[i] += d[i] as f64 * e_r;
            for j in 0..m {
                tensor[i * m + j] += d[i] as f64 * e_nr[j]
                    + e_nr[i] * d[j] as f64
                    + d[i] as f64 * d[j] as f64 * e_r;
            }
        }
    }
    MomentResidual {
        first_order: first.into_iter().map(f64::abs).collect(),
        second_order: tensor.into_iter().fold(0.0, |a, x| a.max(x.abs())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::network::parse_network;
    use crate::reduction::reduce_network;
    use crate::statespace::explore;
    use approx::assert_abs_diff_eq;

    fn delta_at(space: &StateSpace, state: &[u64]) -> Vec<f64> {
        let mut p = vec![0.0; space.len()];
        p[space.index_of(state).unwrap()] = 1.0;
        p
    }

    #[test]
    fn birth_death_relaxes_to_truncated_poisson() {
        let net = parse_network(fixtures::BIRTH_DEATH).unwrap();
        let ex = explore(&net).unwrap();
        let p0 = delta_at(&ex.space, &[1]);
        let traj = integrate(&ex.split.full, &p0, &[20.0]).unwrap();
        let p = &traj.distributions[0];
        // Truncated Poisson(2) on 0..=30.
        let mut poisson = vec![0.0f64; 31];
        let lambda: f64 = 2.0;
        for (n, q) in poisson.iter_mut().enumerate() {
            let mut term = (-lambda).exp();
            for j in 1..=n {
                term *= lambda / j as f64;
            }
            *q = term;
        }
        let z: f64 = poisson.iter().sum();
        let tv: f64 = p
            .iter()
            .enumerate()
            .map(|(n, &pn)| {
                let idx = ex.space.states[n][0] as usize;
                (pn - poisson[idx] / z).abs()
            })
            .sum::<f64>()
            / 2.0;
        assert!(tv < 1e-6, "total variation {tv}");
    }

    #[test]
    fn t_zero_returns_initial_distribution() {
        let net = parse_network(fixtures::AB).unwrap();
        let ex = explore(&net).unwrap();
        let p0 = delta_at(&ex.space, &[100, 1]);
        let traj = integrate(&ex.split.full, &p0, &[0.0]).unwrap();
        assert_eq!(traj.distributions[0], p0);
    }

    #[test]
    fn uniformization_matches_dense_exponential() {
        for text in [fixtures::BIRTH_DEATH, fixtures::TRIANGULAR, fixtures::NETWORK2] {
            let net = parse_network(text).unwrap();
            let ex = explore(&net).unwrap();
            let mut p0 = vec![0.0; ex.space.len()];
            p0[0] = 1.0;
            let times = [0.3, 1.7, 6.0];
            let uni = integrate(&ex.split.full, &p0, &times).unwrap();
            let dense = integrate_with(
                &ex.split.full,
                &p0,
                &times,
                &IntegrateOptions {
                    dense: true,
                    ..Default::default()
                },
            )
            .unwrap();
            for (a, b) in uni.distributions.iter().zip(&dense.distributions) {
                for (x, y) in a.iter().zip(b) {
                    assert!((x - y).abs() < 1e-8, "{x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn probability_is_conserved() {
        let net = parse_network(fixtures::NETWORK1).unwrap();
        let ex = explore(&net).unwrap();
        let mut p0 = vec![0.0; ex.space.len()];
        p0[0] = 1.0;
        let times: Vec<f64> = (1..=20).map(|i| i as f64 * 2.5).collect();
        let traj = integrate(&ex.split.full, &p0, &times).unwrap();
        for p in &traj.distributions {
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            assert!(p.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn stationary_of_birth_death_is_truncated_poisson() {
        let net = parse_network(fixtures::BIRTH_DEATH).unwrap();
        let ex = explore(&net).unwrap();
        let ps = stationary(&ex.split.full).unwrap();
        assert_eq!(ps.len(), 1);
        let p = &ps[0];
        // Detailed balance: p(n+1)/p(n) = 2/(n+1).
        for idx in 0..ex.space.len() {
            let n = ex.space.states[idx][0];
            if n + 1 <= 30 {
                let next = ex.space.index_of(&[n + 1]).unwrap();
                assert_abs_diff_eq!(p[next] / p[idx], 2.0 / (n + 1) as f64, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn stationary_of_fast_block_matches_invariant_distribution() {
        let red = reduce_network(&fixtures::triangular(2, [3.0, 5.0, 0.1, 0.1, 0.1, 0.1])).unwrap();
        // Second fast component (1,0,1) <-> (0,1,1): pi = (k2, k1)/(k1+k2).
        let ps = stationary(&red.split.fast).unwrap();
        // The fast generator has one terminal class per fast component.
        assert_eq!(ps.len(), 3);
        let i10 = red.space.index_of(&[1, 0, 1]).unwrap();
        let i01 = red.space.index_of(&[0, 1, 1]).unwrap();
        let p = ps
            .iter()
            .find(|p| p[i10] > 0.0)
            .expect("component 2 stationary vector");
        assert_abs_diff_eq!(p[i10], 5.0 / 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[i01], 3.0 / 8.0, epsilon = 1e-12);
    }

    #[test]
    fn absorbing_chain_stationary_is_point_mass() {
        let net = parse_network("species: A,B\nr1: A -> B rate=1 slow\ninit: A=1\n").unwrap();
        let ex = explore(&net).unwrap();
        let ps = stationary(&ex.split.full).unwrap();
        assert_eq!(ps.len(), 1);
        let ib = ex.space.index_of(&[0, 1]).unwrap();
        assert_eq!(ps[0][ib], 1.0);
    }

    #[test]
    fn trivial_reduction_has_zero_error() {
        // All reactions fast: single aggregated state, and the comparison of
        // the (constant) aggregated mass is exact.
        let net = parse_network(
            "species: A,B\nr1: A -> B rate=2 fast\nr2: B -> A rate=1 fast\ninit: A=2\n",
        )
        .unwrap();
        let red = reduce_network(&net).unwrap();
        let mut p0 = vec![0.0; red.space.len()];
        p0[0] = 1.0;
        let times = [0.5, 1.0, 2.0];
        let full = integrate(&red.split.full, &p0, &times).unwrap();
        let p0_red = vec![1.0];
        let reduced = integrate(&red.reduced.generator, &p0_red, &times).unwrap();
        let report = compare_full_reduced(&full, &red.pair, &red.space, &reduced).unwrap();
        assert!(report.sup_aggregated <= 1e-12);
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let net = parse_network(fixtures::AB).unwrap();
        let ex = explore(&net).unwrap();
        let red = reduce_network(&net).unwrap();
        let mut p0 = vec![0.0; ex.space.len()];
        p0[0] = 1.0;
        let full = integrate(&ex.split.full, &p0, &[1.0, 2.0]).unwrap();
        let reduced = integrate(&red.reduced.generator, &[1.0], &[1.0, 3.0]).unwrap();
        assert!(matches!(
            compare_full_reduced(&full, &red.pair, &red.space, &reduced),
            Err(Error::GridMismatch)
        ));
    }

    #[test]
    fn moment_identities_hold_at_stationarity() {
        let net = parse_network(fixtures::BIRTH_DEATH).unwrap();
        let ex = explore(&net).unwrap();
        let p = stationary(&ex.split.full).unwrap().remove(0);
        let res = moment_residuals(&net, &ex.space, &ex.split.full, &p).unwrap();
        assert!(res.first_order.iter().all(|&x| x <= 1e-10), "{res:?}");
        assert!(res.second_order <= 1e-6, "{res:?}");
    }

    #[test]
    fn fast_simplex_moment_identities() {
        let net = fixtures::triangular(2, [3.0, 5.0, 0.1, 0.1, 0.1, 0.1]);
        let red = reduce_network(&net).unwrap();
        for agg in &red.pair.aggregated {
            let res = fast_moment_residuals(&net, &red.space, &agg.member_states, &agg.pi);
            assert!(res.first_order.iter().all(|&x| x <= 1e-12), "{res:?}");
            assert!(res.second_order <= 1e-12, "{res:?}");
        }
    }

    #[test]
    fn non_stationary_distribution_is_rejected() {
        let net = parse_network(fixtures::BIRTH_DEATH).unwrap();
        let ex = explore(&net).unwrap();
        let mut p = stationary(&ex.split.full).unwrap().remove(0);
        // Perturb and renormalize: no silent pass.
        p[0] += 1e-3;
        let z: f64 = p.iter().sum();
        for x in p.iter_mut() {
            *x /= z;
        }
        assert!(matches!(
            moment_residuals(&net, &ex.space, &ex.split.full, &p),
            Err(Error::NotStationary { .. })
        ));
    }
}
