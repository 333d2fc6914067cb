//! File formats: Matrix Market coordinate output for generators and
//! operators, CSV tables, and DOT output for the fast-graph condensation.
//!
//! All floating-point values are printed with Rust's shortest round-trip
//! formatting, so emitted files parse back to bit-identical doubles.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::faststructure::{FastSimplex, FastStructure};
use crate::network::ReactionNetwork;
use crate::reduction::ReducedSystem;
use crate::ssa::EnsembleStats;
use crate::statespace::{Generator, StateSpace};

const MM_HEADER: &str = "%%MatrixMarket matrix coordinate real general";

/// Matrix Market (1-based coordinate, general real) for a sparse generator,
/// including the diagonal; entries in column-major order.
pub fn generator_matrix_market(g: &Generator) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MM_HEADER}");
    let _ = writeln!(out, "{} {} {}", g.dim(), g.dim(), g.nnz());
    for (i, j, v) in g.triplets() {
        let _ = writeln!(out, "{} {} {}", i + 1, j + 1, v);
    }
    out
}

/// Matrix Market for a dense operator (L or Pi); zero entries are skipped.
pub fn dense_matrix_market(m: &nalgebra::DMatrix<f64>) -> String {
    let mut entries = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)] != 0.0 {
                entries.push((i, j, m[(i, j)]));
            }
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "{MM_HEADER}");
    let _ = writeln!(out, "{} {} {}", m.nrows(), m.ncols(), entries.len());
    for (i, j, v) in entries {
        let _ = writeln!(out, "{} {} {}", i + 1, j + 1, v);
    }
    out
}

/// Parse Matrix Market coordinate format back into triplets.
pub fn parse_matrix_market(text: &str) -> Result<(usize, usize, Vec<(usize, usize, f64)>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Invalid("empty matrix file".into()))?;
    if !header.starts_with("%%MatrixMarket") {
        return Err(Error::Invalid("missing MatrixMarket header".into()));
    }
    let mut lines = lines.filter(|l| !l.starts_with('%'));
    let dims = lines
        .next()
        .ok_or_else(|| Error::Invalid("missing dimensions".into()))?;
    let mut parts = dims.split_whitespace();
    let parse_dim = |p: Option<&str>| -> Result<usize> {
        p.and_then(|x| x.parse().ok())
            .ok_or_else(|| Error::Invalid(format!("bad dimension line `{dims}`")))
    };
    let nrows = parse_dim(parts.next())?;
    let ncols = parse_dim(parts.next())?;
    let nnz = parse_dim(parts.next())?;
    let mut triplets = Vec::with_capacity(nnz);
    for line in lines {
        let mut p = line.split_whitespace();
        let (Some(i), Some(j), Some(v)) = (p.next(), p.next(), p.next()) else {
            return Err(Error::Invalid(format!("bad entry `{line}`")));
        };
        let i: usize = i.parse().map_err(|_| Error::Invalid(format!("bad row `{i}`")))?;
        let j: usize = j.parse().map_err(|_| Error::Invalid(format!("bad col `{j}`")))?;
        let v: f64 = v.parse().map_err(|_| Error::Invalid(format!("bad value `{v}`")))?;
        triplets.push((i - 1, j - 1, v));
    }
    if triplets.len() != nnz {
        return Err(Error::Invalid(format!(
            "expected {nnz} entries, found {}",
            triplets.len()
        )));
    }
    Ok((nrows, ncols, triplets))
}

/// State table: `index,<species...>` with one row per accessible state.
pub fn states_csv(net: &ReactionNetwork, space: &StateSpace) -> String {
    let mut out = String::from("index");
    for s in &net.species {
        let _ = write!(out, ",{}", s.name);
    }
    out.push('\n');
    for (i, state) in space.states.iter().enumerate() {
        let _ = write!(out, "{i}");
        for &n in state {
            let _ = write!(out, ",{n}");
        }
        out.push('\n');
    }
    out
}

fn join_i64(v: &[i64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

fn join_u64(v: &[u64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

/// Aggregated-state table: `index,scc_id,representative_state,ntilde`.
/// Vector-valued fields use `;` separators inside the cell.
pub fn aggregated_csv(reduced: &ReducedSystem, space: &StateSpace) -> String {
    let mut out = String::from("index,scc_id,representative_state,ntilde\n");
    for agg in &reduced.aggregated {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            agg.index,
            agg.scc_id,
            join_u64(&space.states[agg.representative]),
            join_i64(&agg.ntilde),
        );
    }
    out
}

/// Per-component scc table: `component,scc,kind,size,ntilde`.
pub fn structure_csv(structure: &FastStructure, simplexes: &[FastSimplex]) -> String {
    let label_of_scc: std::collections::HashMap<usize, &FastSimplex> = simplexes
        .iter()
        .map(|s| (s.absorbing_scc, s))
        .collect();
    let mut out = String::from("component,scc,kind,size,ntilde\n");
    for comp in &structure.components {
        for sid in comp.scc_order() {
            let scc = &structure.sccs[sid];
            let label = label_of_scc
                .get(&sid)
                .map(|s| join_i64(&s.label))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{label}",
                comp.id,
                scc.id,
                scc.kind,
                scc.members.len()
            );
        }
    }
    out
}

/// DOT digraph of the fast-graph condensation: one node per scc, one edge
/// per condensation edge.
pub fn condensation_dot(structure: &FastStructure, fast: &Generator) -> String {
    let mut edges = std::collections::BTreeSet::new();
    for j in 0..fast.dim() {
        for &(i, rate) in fast.column(j) {
            if rate > 0.0 {
                let (sj, si) = (structure.scc_of_state[j], structure.scc_of_state[i]);
                if sj != si {
                    edges.insert((sj, si));
                }
            }
        }
    }
    let mut out = String::from("digraph condensation {\n");
    for scc in &structure.sccs {
        let shape = match scc.kind {
            crate::faststructure::SccKind::Absorbing => "doublecircle",
            crate::faststructure::SccKind::Internal => "ellipse",
            crate::faststructure::SccKind::Source => "box",
        };
        let _ = writeln!(
            out,
            "  s{} [label=\"scc {} ({}, {} states)\", shape={shape}];",
            scc.id,
            scc.id,
            scc.kind,
            scc.members.len()
        );
    }
    for (from, to) in edges {
        let _ = writeln!(out, "  s{from} -> s{to};");
    }
    out.push_str("}\n");
    out
}

/// Moment trajectory: `time,mean_<s>...,var_<s>...`.
pub fn moments_csv(names: &[&str], times: &[f64], moments: &[Vec<(f64, f64)>]) -> String {
    let mut out = String::from("time");
    for n in names {
        let _ = write!(out, ",mean_{n}");
    }
    for n in names {
        let _ = write!(out, ",var_{n}");
    }
    out.push('\n');
    for (t, row) in times.iter().zip(moments) {
        let _ = write!(out, "{t}");
        for (mean, _) in row {
            let _ = write!(out, ",{mean}");
        }
        for (_, var) in row {
            let _ = write!(out, ",{var}");
        }
        out.push('\n');
    }
    out
}

/// Ensemble statistics: `time,mean_<s>,std_<s>,...` interleaved per species.
pub fn ensemble_csv(names: &[&str], stats: &EnsembleStats) -> String {
    let mut out = String::from("time");
    for n in names {
        let _ = write!(out, ",mean_{n},std_{n}");
    }
    out.push('\n');
    for (ti, t) in stats.grid.iter().enumerate() {
        let _ = write!(out, "{t}");
        for k in 0..names.len() {
            let _ = write!(out, ",{},{}", stats.mean[ti][k], stats.std[ti][k]);
        }
        out.push('\n');
    }
    out
}

/// Distribution snapshots in long form: `time,state,probability`, skipping
/// zero entries.
pub fn distribution_csv(times: &[f64], distributions: &[Vec<f64>]) -> String {
    let mut out = String::from("time,state,probability\n");
    for (t, p) in times.iter().zip(distributions) {
        for (s, &q) in p.iter().enumerate() {
            if q != 0.0 {
                let _ = writeln!(out, "{t},{s},{q}");
            }
        }
    }
    out
}

/// Full-vs-reduced error report: `time,linf_aggregated`.
pub fn compare_csv(times: &[f64], linf: &[f64]) -> String {
    let mut out = String::from("time,linf_aggregated\n");
    for (t, e) in times.iter().zip(linf) {
        let _ = writeln!(out, "{t},{e}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::network::parse_network;
    use crate::statespace::explore;
    use proptest::prelude::*;

    #[test]
    fn generator_round_trips_through_matrix_market() {
        let net = parse_network(fixtures::TRIANGULAR).unwrap();
        let ex = explore(&net).unwrap();
        let text = generator_matrix_market(&ex.split.full);
        let (n, m, triplets) = parse_matrix_market(&text).unwrap();
        assert_eq!((n, m), (6, 6));
        assert_eq!(triplets.len(), ex.split.full.nnz());
        for (i, j, v) in triplets {
            assert_eq!(ex.split.full.get(i, j), v, "bit-exact round trip");
        }
    }

    #[test]
    fn states_csv_has_header_and_all_rows() {
        let net = parse_network(fixtures::TRIANGULAR).unwrap();
        let ex = explore(&net).unwrap();
        let csv = states_csv(&net, &ex.space);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "index,A,B,C");
        assert_eq!(lines.len(), 1 + ex.space.len());
        assert_eq!(lines[1], "0,2,0,0");
    }

    proptest! {
        #[test]
        fn doubles_round_trip_in_matrix_market(values in proptest::collection::vec(-1e6f64..1e6, 1..20)) {
            let mut m = nalgebra::DMatrix::zeros(values.len(), 1);
            for (i, &v) in values.iter().enumerate() {
                m[(i, 0)] = v;
            }
            let text = dense_matrix_market(&m);
            let (_, _, triplets) = parse_matrix_market(&text).unwrap();
            for (i, _, v) in triplets {
                prop_assert_eq!(m[(i, 0)], v);
            }
        }
    }
}
