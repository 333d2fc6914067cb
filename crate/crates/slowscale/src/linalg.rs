//! Exact integer linear algebra for network invariants.
//!
//! Ranks and null spaces of stoichiometric matrices are computed over the
//! rationals, never in floating point: conservation laws must have exact
//! integer entries.

use num::rational::BigRational;
use num::traits::{One, Signed, Zero};
use num::BigInt;

fn to_rational(m: &[Vec<i64>]) -> Vec<Vec<BigRational>> {
    m.iter()
        .map(|row| {
            row.iter()
                .map(|&x| BigRational::from_integer(BigInt::from(x)))
                .collect()
        })
        .collect()
}

/// Reduced row echelon form in place; returns the pivot column of each pivot row.
fn rref(m: &mut [Vec<BigRational>]) -> Vec<usize> {
    let rows = m.len();
    let cols = if rows == 0 { 0 } else { m[0].len() };
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        let inv = m[r][c].clone();
        for x in m[r].iter_mut() {
            *x /= inv.clone();
        }
        for i in 0..rows {
            if i != r && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for c2 in 0..cols {
                    let sub = f.clone() * m[r][c2].clone();
                    m[i][c2] -= sub;
                }
            }
        }
        pivots.push(c);
        r += 1;
        if r == rows {
            break;
        }
    }
    pivots
}

/// Rank of an integer matrix over the rationals.
pub fn rank(m: &[Vec<i64>]) -> usize {
    if m.is_empty() || m[0].is_empty() {
        return 0;
    }
    let mut q = to_rational(m);
    rref(&mut q).len()
}

/// Scale a rational row to coprime integers with positive leading entry.
fn integerize(row: &[BigRational]) -> Vec<i64> {
    let mut lcm = BigInt::one();
    for x in row {
        if !x.is_zero() {
            lcm = num::integer::lcm(lcm, x.denom().clone());
        }
    }
    let ints: Vec<BigInt> = row
        .iter()
        .map(|x| x.numer() * (&lcm / x.denom()))
        .collect();
    let mut gcd = BigInt::zero();
    for x in &ints {
        gcd = num::integer::gcd(gcd, x.clone());
    }
    if gcd.is_zero() {
        gcd = BigInt::one();
    }
    let mut out: Vec<BigInt> = ints.into_iter().map(|x| x / &gcd).collect();
    if let Some(first) = out.iter().find(|x| !x.is_zero()) {
        if first.is_negative() {
            for x in out.iter_mut() {
                *x = -x.clone();
            }
        }
    }
    out.iter()
        .map(|x| {
            let (sign, digits) = x.to_u64_digits();
            let v = match digits.len() {
                0 => 0i64,
                1 => i64::try_from(digits[0]).expect("null-space entry exceeds i64"),
                _ => panic!("null-space entry exceeds i64"),
            };
            if sign == num::bigint::Sign::Minus {
                -v
            } else {
                v
            }
        })
        .collect()
}

/// Integer basis of the left null space of `m` (rows `a` with `a * m = 0`).
///
/// Computed by exact elimination of the transpose; each basis row puts a 1 on
/// one free coordinate and solves the pivot coordinates, which yields
/// non-negative rows whenever the free-variable parametrization allows it.
/// Rows are scaled to coprime integers with positive leading entry.
pub fn left_null_space(m: &[Vec<i64>]) -> Vec<Vec<i64>> {
    let rows = m.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = m[0].len();
    // Transpose: solutions of (m^T) a = 0.
    let mut t = vec![vec![BigRational::zero(); rows]; cols];
    for (i, row) in m.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            t[j][i] = BigRational::from_integer(BigInt::from(x));
        }
    }
    let pivots = rref(&mut t);
    let pivot_set: std::collections::HashSet<usize> = pivots.iter().copied().collect();
    let mut basis = Vec::new();
    for free in 0..rows {
        if pivot_set.contains(&free) {
            continue;
        }
        let mut a = vec![BigRational::zero(); rows];
        a[free] = BigRational::one();
        for (prow, &pcol) in pivots.iter().enumerate() {
            a[pcol] = -t[prow][free].clone();
        }
        basis.push(integerize(&a));
    }
    improve_nonnegativity(&mut basis);
    basis
}

/// Replace mixed-sign basis rows by small integer combinations of the rows
/// when that removes the negative entries. The span is unchanged because the
/// replaced row keeps a non-zero coefficient on itself. Non-negativity is not
/// guaranteed in general; this only prefers it when a nearby combination
/// exists.
fn improve_nonnegativity(basis: &mut [Vec<i64>]) {
    let d = basis.len();
    if d < 2 || d > 6 {
        return;
    }
    let weight = |row: &[i64]| row.iter().map(|&x| x.abs()).sum::<i64>();
    for _ in 0..d {
        for i in 0..d {
            if basis[i].iter().all(|&x| x >= 0) {
                continue;
            }
            let mut best: Option<Vec<i64>> = None;
            let others: Vec<usize> = (0..d).filter(|&j| j != i).collect();
            let span = 3i64;
            let combos = (2 * span + 1).pow(others.len() as u32);
            for own in [1i64, -1] {
                for code in 0..combos {
                    let mut cand: Vec<i64> = basis[i].iter().map(|&x| own * x).collect();
                    let mut c = code;
                    for &j in &others {
                        let coeff = c % (2 * span + 1) - span;
                        c /= 2 * span + 1;
                        if coeff != 0 {
                            for (x, &y) in cand.iter_mut().zip(&basis[j]) {
                                *x += coeff * y;
                            }
                        }
                    }
                    if cand.iter().all(|&x| x >= 0) && cand.iter().any(|&x| x != 0) {
                        let g = cand.iter().fold(0i64, |a, &x| num::integer::gcd(a, x));
                        let cand: Vec<i64> = cand.iter().map(|x| x / g).collect();
                        if best.as_deref().is_none_or(|b| weight(&cand) < weight(b)) {
                            best = Some(cand);
                        }
                    }
                }
            }
            if let Some(row) = best {
                basis[i] = row;
            }
        }
        if basis.iter().all(|r| r.iter().all(|&x| x >= 0)) {
            break;
        }
    }
}

/// Check `a * m == 0` exactly in integer arithmetic.
#[cfg_attr(not(test), allow(dead_code))]
pub fn annihilates(a: &[i64], m: &[Vec<i64>]) -> bool {
    if m.is_empty() {
        return true;
    }
    let cols = m[0].len();
    (0..cols).all(|c| {
        m.iter()
            .zip(a)
            .map(|(row, &ai)| i128::from(ai) * i128::from(row[c]))
            .sum::<i128>()
            == 0
    })
}

/// Whether `v` lies in the rational row span of `basis`.
#[cfg_attr(not(test), allow(dead_code))]
pub fn in_row_span(v: &[i64], basis: &[Vec<i64>]) -> bool {
    if basis.is_empty() {
        return v.iter().all(|&x| x == 0);
    }
    let mut m: Vec<Vec<i64>> = basis.to_vec();
    let r0 = rank(&m);
    m.push(v.to_vec());
    rank(&m) == r0
}
