//! Bundled example networks and parameterized fixture generators.
//!
//! The `.rxn` files live in the crate's `fixtures/` directory and are embedded
//! here so tests and examples work from any working directory.

use crate::network::{parse_network, ReactionNetwork};

pub const AB: &str = include_str!("../fixtures/ab.rxn");
pub const BIRTH_DEATH: &str = include_str!("../fixtures/birthdeath.rxn");
pub const INPUT_AB: &str = include_str!("../fixtures/inputAB.rxn");
pub const WILHELM: &str = include_str!("../fixtures/wilhelm.rxn");
pub const TRIANGULAR: &str = include_str!("../fixtures/triangular.rxn");
pub const NETWORK1: &str = include_str!("../fixtures/network1.rxn");
pub const NETWORK2: &str = include_str!("../fixtures/network2.rxn");
pub const NETWORK3: &str = include_str!("../fixtures/network3.rxn");
pub const ENZYME: &str = include_str!("../fixtures/enzyme.rxn");
pub const PFK: &str = include_str!("../fixtures/pfk.rxn");

/// Name/text pairs for every bundled fixture, in a stable order.
pub const ALL: &[(&str, &str)] = &[
    ("ab", AB),
    ("birthdeath", BIRTH_DEATH),
    ("inputAB", INPUT_AB),
    ("wilhelm", WILHELM),
    ("triangular", TRIANGULAR),
    ("network1", NETWORK1),
    ("network2", NETWORK2),
    ("network3", NETWORK3),
    ("enzyme", ENZYME),
    ("pfk", PFK),
];

/// Closed triangular system A <-> B (fast), B <-> C, C <-> A (slow) with `n0`
/// molecules in total, all initially on A. Rates are `[k1..k6]` in that
/// reaction order.
pub fn triangular_text(n0: u64, rates: [f64; 6]) -> String {
    let [k1, k2, k3, k4, k5, k6] = rates;
    format!(
        "species: A, B, C\n\
         reaction r1: A -> B rate={k1} fast\n\
         reaction r2: B -> A rate={k2} fast\n\
         reaction r3: B -> C rate={k3} slow\n\
         reaction r4: C -> B rate={k4} slow\n\
         reaction r5: C -> A rate={k5} slow\n\
         reaction r6: A -> C rate={k6} slow\n\
         init: A={n0}\n"
    )
}

pub fn triangular(n0: u64, rates: [f64; 6]) -> ReactionNetwork {
    parse_network(&triangular_text(n0, rates)).expect("triangular fixture parses")
}

/// Parameters of the flagellar-motor switching model.
#[derive(Debug, Clone, Copy)]
pub struct MotorParams {
    /// Number of binding sites.
    pub sites: usize,
    /// Ligand binding / unbinding constants on the clockwise chain.
    pub k1: f64,
    pub k_m1: f64,
    /// Ligand binding / unbinding constants on the counterclockwise chain.
    pub k3: f64,
    pub k_m3: f64,
    /// Slow switching rates CW_i -> CCW_i and CCW_i -> CW_i.
    pub alpha: f64,
    pub beta: f64,
    /// Fixed ligand copy number entering the binding propensities.
    pub y: f64,
}

impl Default for MotorParams {
    fn default() -> Self {
        MotorParams {
            sites: 4,
            k1: 2.0,
            k_m1: 1.0,
            k3: 2.0,
            k_m3: 1.0,
            alpha: 0.1,
            beta: 0.08,
            y: 100.0,
        }
    }
}

/// Motor model: two ladders CW_0..CW_n and CCW_0..CCW_n.  Horizontal
/// (binding) steps are fast, vertical (switching) steps are slow.  Exactly one
/// of the 2(n+1) states is occupied, so conversions carry the full rate in
/// their constants. `start_cw` selects which rotation state holds the single
/// molecule at t=0.
pub fn motor_text(p: MotorParams, start_cw: bool) -> String {
    let n = p.sites;
    let mut names = Vec::new();
    for i in 0..=n {
        names.push(format!("CW{i}"));
    }
    for i in 0..=n {
        names.push(format!("CCW{i}"));
    }
    let mut s = format!("species: {}\n", names.join(", "));
    for i in 0..n {
        let fwd = (n - i) as f64 * p.k1 * p.y;
        let bwd = (i + 1) as f64 * p.k_m1;
        s.push_str(&format!("reaction cwb{i}: CW{i} -> CW{} rate={fwd} fast\n", i + 1));
        s.push_str(&format!("reaction cwu{i}: CW{} -> CW{i} rate={bwd} fast\n", i + 1));
    }
    for i in 0..n {
        let fwd = (n - i) as f64 * p.k3 * p.y;
        let bwd = (i + 1) as f64 * p.k_m3;
        s.push_str(&format!("reaction ccwb{i}: CCW{i} -> CCW{} rate={fwd} fast\n", i + 1));
        s.push_str(&format!("reaction ccwu{i}: CCW{} -> CCW{i} rate={bwd} fast\n", i + 1));
    }
    for i in 0..=n {
        s.push_str(&format!("reaction sw{i}: CW{i} -> CCW{i} rate={} slow\n", p.alpha));
        s.push_str(&format!("reaction swr{i}: CCW{i} -> CW{i} rate={} slow\n", p.beta));
    }
    let start = if start_cw { "CW0" } else { "CCW0" };
    s.push_str(&format!("init: {start}=1\n"));
    s
}

pub fn motor(p: MotorParams, start_cw: bool) -> ReactionNetwork {
    parse_network(&motor_text(p, start_cw)).expect("motor fixture parses")
}

/// Closed cycle of `m` first-order conversions with `n0` molecules; every
/// composition with the right total is accessible.
pub fn closed_chain_text(m: usize, n0: u64) -> String {
    let names: Vec<String> = (1..=m).map(|i| format!("M{i}")).collect();
    let mut s = format!("species: {}\n", names.join(", "));
    for i in 0..m {
        let j = (i + 1) % m;
        s.push_str(&format!(
            "reaction c{i}: {} -> {} rate=1.0 slow\n",
            names[i], names[j]
        ));
    }
    s.push_str(&format!("init: M1={n0}\n"));
    s
}

pub fn closed_chain(m: usize, n0: u64) -> ReactionNetwork {
    parse_network(&closed_chain_text(m, n0)).expect("closed chain fixture parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_bundled_fixtures_parse() {
        for (name, text) in ALL {
            let net = parse_network(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(net.reaction_count() > 0, "{name}");
        }
    }

    #[test]
    fn triangular_file_matches_generator() {
        let from_file = parse_network(TRIANGULAR).unwrap();
        let generated = triangular(2, [10.0, 10.0, 0.1, 0.1, 0.1, 0.1]);
        assert_eq!(from_file.reactions, generated.reactions);
        assert_eq!(from_file.initial_state, generated.initial_state);
    }

    #[test]
    fn motor_has_one_molecule_and_two_ladders() {
        let net = motor(MotorParams::default(), true);
        assert_eq!(net.species_count(), 10);
        assert_eq!(net.reaction_count(), 4 * 4 + 10);
        assert_eq!(net.initial_state.iter().sum::<u64>(), 1);
    }
}
