//! Reaction-network description: parsing, stoichiometric/incidence structure
//! and integer conservation laws.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::linalg;

/// Whether a reaction runs on the fast or the slow time scale.
///
/// The tag is given per reaction in the input file; there is no automatic
/// detection, since a rate constant alone does not determine the scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Speed {
    Fast,
    Slow,
}

impl fmt::Display for Speed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Speed::Fast => write!(f, "fast"),
            Speed::Slow => write!(f, "slow"),
        }
    }
}

/// A chemical species with a dense 0-based index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Species {
    pub name: String,
    pub index: usize,
}

/// A complex: the multiset of species on one side of a reaction, stored as a
/// length-m coefficient vector. The all-zero vector is the null complex.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Complex {
    pub coefficients: Vec<u64>,
}

impl Complex {
    pub fn is_null(&self) -> bool {
        self.coefficients.iter().all(|&c| c == 0)
    }

    pub fn molecularity(&self) -> u64 {
        self.coefficients.iter().sum()
    }
}

/// One irreversible reaction between two complexes. Reversible arrows in the
/// input are expanded into two of these.
#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub label: String,
    pub reactant: usize,
    pub product: usize,
    /// Stochastic rate constant c_l (probability per unit time per reactant
    /// combination). No volume conversion is applied.
    pub rate_constant: f64,
    pub speed: Speed,
}

/// A parsed reaction network together with its initial state and optional
/// truncation box. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionNetwork {
    pub species: Vec<Species>,
    pub complexes: Vec<Complex>,
    pub reactions: Vec<Reaction>,
    pub initial_state: Vec<u64>,
    pub caps: Option<Vec<u64>>,
    /// Non-fatal findings from the parser (e.g. molecularity > 2).
    pub warnings: Vec<String>,
}

/// Stoichiometric and incidence structure of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkStructure {
    /// m x p: column j is the composition of complex j.
    pub nu: Vec<Vec<i64>>,
    /// p x r incidence matrix: one -1 (reactant) and one +1 (product) per column.
    pub incidence: Vec<Vec<i64>>,
    /// p x r exit matrix: incidence with +1 entries zeroed and sign flipped.
    pub exit: Vec<Vec<i64>>,
    /// m x r: nu * incidence; column l is the state change of reaction l.
    pub nu_e: Vec<Vec<i64>>,
    /// Columns of nu_e for fast-tagged reactions.
    pub nu_e_fast: Vec<Vec<i64>>,
    /// Columns of nu_e for slow-tagged reactions.
    pub nu_e_slow: Vec<Vec<i64>>,
}

impl ReactionNetwork {
    pub fn species_count(&self) -> usize {
        self.species.len()
    }

    pub fn reaction_count(&self) -> usize {
        self.reactions.len()
    }

    pub fn complex_count(&self) -> usize {
        self.complexes.len()
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s.name == name)
    }

    pub fn has_fast(&self) -> bool {
        self.reactions.iter().any(|r| r.speed == Speed::Fast)
    }

    /// State change vector of reaction `l` (the column nu*E_(l)).
    pub fn delta(&self, l: usize) -> Vec<i64> {
        let r = &self.reactions[l];
        let reac = &self.complexes[r.reactant].coefficients;
        let prod = &self.complexes[r.product].coefficients;
        reac.iter()
            .zip(prod)
            .map(|(&a, &b)| b as i64 - a as i64)
            .collect()
    }

    /// Input reactions are those leaving the null complex.
    pub fn input_reactions(&self) -> Vec<&Reaction> {
        self.reactions
            .iter()
            .filter(|r| self.complexes[r.reactant].is_null())
            .collect()
    }

    /// Same network with a different initial state.
    pub fn with_initial_state(&self, init: Vec<u64>) -> Result<ReactionNetwork> {
        if init.len() != self.species_count() {
            return Err(Error::DimensionMismatch {
                expected: self.species_count(),
                got: init.len(),
            });
        }
        if let Some(caps) = &self.caps {
            if init.iter().zip(caps).any(|(&n, &c)| n > c) {
                return Err(Error::Invalid(
                    "initial state exceeds the truncation caps".into(),
                ));
            }
        }
        let mut net = self.clone();
        net.initial_state = init;
        Ok(net)
    }
}

/// Canonical textual form; parsing the output reproduces the network.
impl fmt::Display for ReactionNetwork {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.species.iter().map(|s| s.name.as_str()).collect();
        writeln!(f, "species: {}", names.join(", "))?;
        for r in &self.reactions {
            writeln!(
                f,
                "reaction {}: {} -> {} rate={} {}",
                r.label,
                format_complex(&self.complexes[r.reactant], &names),
                format_complex(&self.complexes[r.product], &names),
                r.rate_constant,
                r.speed
            )?;
        }
        let fmt_assign = |v: &[u64]| {
            v.iter()
                .enumerate()
                .map(|(i, &n)| format!("{}={}", names[i], n))
                .collect::<Vec<_>>()
                .join(", ")
        };
        writeln!(f, "init: {}", fmt_assign(&self.initial_state))?;
        if let Some(caps) = &self.caps {
            writeln!(f, "cap: {}", fmt_assign(caps))?;
        }
        Ok(())
    }
}

fn format_complex(c: &Complex, names: &[&str]) -> String {
    if c.is_null() {
        return "0".to_string();
    }
    c.coefficients
        .iter()
        .enumerate()
        .filter(|(_, &k)| k > 0)
        .map(|(i, &k)| {
            if k == 1 {
                names[i].to_string()
            } else {
                format!("{} {}", k, names[i])
            }
        })
        .collect::<Vec<_>>()
        .join(" + ")
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '\'')
}

struct Parser {
    species: Vec<Species>,
    complexes: Vec<Complex>,
    complex_index: HashMap<Vec<u64>, usize>,
    reactions: Vec<Reaction>,
    init: HashMap<usize, u64>,
    caps: HashMap<usize, u64>,
    saw_init: bool,
    saw_cap: bool,
    warnings: Vec<String>,
}

impl Parser {
    fn err<T>(line: usize, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            line,
            msg: msg.into(),
        })
    }

    fn species_index(&self, name: &str, line: usize) -> Result<usize> {
        self.species
            .iter()
            .position(|s| s.name == name)
            .ok_or(Error::Parse {
                line,
                msg: format!("unknown species `{name}`"),
            })
    }

    fn intern_complex(&mut self, coeffs: Vec<u64>) -> usize {
        if let Some(&i) = self.complex_index.get(&coeffs) {
            return i;
        }
        let i = self.complexes.len();
        self.complex_index.insert(coeffs.clone(), i);
        self.complexes.push(Complex {
            coefficients: coeffs,
        });
        i
    }

    fn parse_complex(&mut self, text: &str, line: usize) -> Result<usize> {
        let text = text.trim();
        let m = self.species.len();
        if text == "0" {
            return Ok(self.intern_complex(vec![0; m]));
        }
        let mut coeffs = vec![0u64; m];
        for term in text.split('+') {
            let term = term.trim();
            if term.is_empty() {
                return Self::err(line, "empty term in complex");
            }
            let (count, name) = split_coefficient(term);
            let count = match count {
                Some(c) => c
                    .parse::<u64>()
                    .map_err(|_| Error::Parse {
                        line,
                        msg: format!("bad stoichiometric coefficient `{c}`"),
                    })
                    .and_then(|v| {
                        if v == 0 {
                            Self::err(line, "zero stoichiometric coefficient")
                        } else {
                            Ok(v)
                        }
                    })?,
                None => 1,
            };
            if !is_ident(name) {
                return Self::err(line, format!("bad species name `{name}`"));
            }
            let idx = self.species_index(name, line)?;
            coeffs[idx] += count;
        }
        Ok(self.intern_complex(coeffs))
    }

    fn parse_assignments(&self, rest: &str, line: usize) -> Result<Vec<(usize, u64)>> {
        let mut out = Vec::new();
        for item in rest.split(',') {
            let item = item.trim();
            if item.is_empty() {
                continue;
            }
            let Some((name, value)) = item.split_once('=') else {
                return Self::err(line, format!("expected `name=count`, got `{item}`"));
            };
            let idx = self.species_index(name.trim(), line)?;
            let value: u64 = value.trim().parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad count `{}`", value.trim()),
            })?;
            out.push((idx, value));
        }
        Ok(out)
    }

    fn add_reaction(
        &mut self,
        label: String,
        reactant: usize,
        product: usize,
        rate: f64,
        speed: Speed,
        line: usize,
    ) -> Result<()> {
        if self.reactions.iter().any(|r| r.label == label) {
            return Self::err(line, format!("duplicate reaction label `{label}`"));
        }
        if !(rate > 0.0) || !rate.is_finite() {
            return Self::err(line, format!("non-positive rate {rate} for `{label}`"));
        }
        if reactant == product {
            return Self::err(line, format!("reaction `{label}` has identical sides"));
        }
        let mol = self.complexes[reactant]
            .molecularity()
            .max(self.complexes[product].molecularity());
        if mol > 2 {
            self.warnings.push(format!(
                "line {line}: complex of molecularity {mol} in reaction `{label}`"
            ));
        }
        self.reactions.push(Reaction {
            label,
            reactant,
            product,
            rate_constant: rate,
            speed,
        });
        Ok(())
    }

    fn parse_reaction_line(&mut self, label: &str, rest: &str, line: usize) -> Result<()> {
        if !is_ident(label) {
            return Self::err(line, format!("bad reaction label `{label}`"));
        }
        let (reversible, lhs, rhs_and_opts) = if let Some((l, r)) = rest.split_once("<->") {
            (true, l, r)
        } else if let Some((l, r)) = rest.split_once("->") {
            (false, l, r)
        } else {
            return Self::err(line, "expected `->` or `<->`");
        };

        // Options start at the first `key=value` or speed token.
        let tokens: Vec<&str> = rhs_and_opts.split_whitespace().collect();
        let opt_start = tokens
            .iter()
            .position(|t| t.contains('=') || *t == "fast" || *t == "slow")
            .unwrap_or(tokens.len());
        let product_text = tokens[..opt_start].join(" ");
        if product_text.is_empty() {
            return Self::err(line, "missing product complex");
        }

        let mut rate = None;
        let mut rrate = None;
        let mut speed = None;
        for tok in &tokens[opt_start..] {
            if let Some(v) = tok.strip_prefix("rate=") {
                rate = Some(v.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    msg: format!("bad rate `{v}`"),
                })?);
            } else if let Some(v) = tok.strip_prefix("rrate=") {
                rrate = Some(v.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    msg: format!("bad rrate `{v}`"),
                })?);
            } else if *tok == "fast" {
                speed = Some(Speed::Fast);
            } else if *tok == "slow" {
                speed = Some(Speed::Slow);
            } else {
                return Self::err(line, format!("unexpected token `{tok}`"));
            }
        }
        let Some(rate) = rate else {
            return Self::err(line, "missing rate=");
        };
        let Some(speed) = speed else {
            return Self::err(line, "missing speed tag (fast|slow)");
        };
        if reversible && rrate.is_none() {
            return Self::err(line, "reversible reaction needs rrate=");
        }
        if !reversible && rrate.is_some() {
            return Self::err(line, "rrate= given for an irreversible reaction");
        }

        let reactant = self.parse_complex(lhs, line)?;
        let product = self.parse_complex(&product_text, line)?;
        self.add_reaction(label.to_string(), reactant, product, rate, speed, line)?;
        if let Some(rrate) = rrate {
            self.add_reaction(
                format!("{label}_rev"),
                product,
                reactant,
                rrate,
                speed,
                line,
            )?;
        }
        Ok(())
    }
}

fn split_coefficient(term: &str) -> (Option<&str>, &str) {
    let digits = term.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits == 0 {
        (None, term)
    } else {
        (Some(&term[..digits]), term[digits..].trim_start())
    }
}

/// Parse a network description (see the file-format section of the README).
///
/// Reversible arrows expand into two irreversible reactions; the null complex
/// is created on demand when a `0` side appears.
pub fn parse_network(text: &str) -> Result<ReactionNetwork> {
    let mut p = Parser {
        species: Vec::new(),
        complexes: Vec::new(),
        complex_index: HashMap::new(),
        reactions: Vec::new(),
        init: HashMap::new(),
        caps: HashMap::new(),
        saw_init: false,
        saw_cap: false,
        warnings: Vec::new(),
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((head, rest)) = content.split_once(':') else {
            return Parser::err(line, "expected `key: ...`");
        };
        let head = head.trim();
        match head {
            "species" => {
                for name in rest.split(',') {
                    let name = name.trim();
                    if name.is_empty() {
                        continue;
                    }
                    if !is_ident(name) {
                        return Parser::err(line, format!("bad species name `{name}`"));
                    }
                    if p.species.iter().any(|s| s.name == name) {
                        return Parser::err(line, format!("duplicate species `{name}`"));
                    }
                    let index = p.species.len();
                    p.species.push(Species {
                        name: name.to_string(),
                        index,
                    });
                }
            }
            "init" => {
                p.saw_init = true;
                for (idx, v) in p.parse_assignments(rest, line)? {
                    if p.init.insert(idx, v).is_some() {
                        return Parser::err(
                            line,
                            format!("duplicate init for `{}`", p.species[idx].name),
                        );
                    }
                }
            }
            "cap" => {
                p.saw_cap = true;
                for (idx, v) in p.parse_assignments(rest, line)? {
                    if v == 0 {
                        return Parser::err(
                            line,
                            format!("cap for `{}` must be positive", p.species[idx].name),
                        );
                    }
                    if p.caps.insert(idx, v).is_some() {
                        return Parser::err(
                            line,
                            format!("duplicate cap for `{}`", p.species[idx].name),
                        );
                    }
                }
            }
            _ => {
                // `reaction <label>: ...` or the shorthand `<label>: ...`.
                let label = match head.strip_prefix("reaction") {
                    Some(l) if !l.trim().is_empty() => l.trim(),
                    Some(_) => return Parser::err(line, "missing reaction label"),
                    None => head,
                };
                p.parse_reaction_line(label, rest, line)?;
            }
        }
    }

    if p.species.is_empty() {
        return Parser::err(0, "no species declared");
    }
    if p.reactions.is_empty() {
        return Parser::err(0, "no reactions");
    }

    let m = p.species.len();
    let initial_state: Vec<u64> = (0..m).map(|i| p.init.get(&i).copied().unwrap_or(0)).collect();
    if !p.saw_init {
        p.warnings.push("no init line; all counts default to 0".into());
    }
    let caps = if p.saw_cap {
        // Species without an explicit cap are left unbounded within the box.
        Some((0..m).map(|i| p.caps.get(&i).copied().unwrap_or(u64::MAX)).collect())
    } else {
        None
    };
    if let Some(caps) = &caps {
        if initial_state.iter().zip(caps).any(|(&n, &c)| n > c) {
            return Parser::err(0, "initial state exceeds the truncation caps");
        }
    }

    Ok(ReactionNetwork {
        species: p.species,
        complexes: p.complexes,
        reactions: p.reactions,
        initial_state,
        caps,
        warnings: p.warnings,
    })
}

/// Build nu, E, E_e and nu*E with the fast/slow column split.
pub fn structure(net: &ReactionNetwork) -> NetworkStructure {
    let m = net.species_count();
    let p = net.complex_count();
    let r = net.reaction_count();

    let mut nu = vec![vec![0i64; p]; m];
    for (j, c) in net.complexes.iter().enumerate() {
        for (i, &k) in c.coefficients.iter().enumerate() {
            nu[i][j] = k as i64;
        }
    }

    let mut incidence = vec![vec![0i64; r]; p];
    let mut exit = vec![vec![0i64; r]; p];
    for (l, reac) in net.reactions.iter().enumerate() {
        incidence[reac.reactant][l] = -1;
        incidence[reac.product][l] = 1;
        exit[reac.reactant][l] = 1;
    }

    let mut nu_e = vec![vec![0i64; r]; m];
    for (l, _) in net.reactions.iter().enumerate() {
        for (i, d) in net.delta(l).into_iter().enumerate() {
            nu_e[i][l] = d;
        }
    }

    let select = |speed: Speed| -> Vec<Vec<i64>> {
        let cols: Vec<usize> = net
            .reactions
            .iter()
            .enumerate()
            .filter(|(_, x)| x.speed == speed)
            .map(|(l, _)| l)
            .collect();
        nu_e.iter()
            .map(|row| cols.iter().map(|&l| row[l]).collect())
            .collect()
    };

    NetworkStructure {
        nu,
        incidence,
        exit,
        nu_e_fast: select(Speed::Fast),
        nu_e_slow: select(Speed::Slow),
        nu_e,
    }
}

/// Deficiency of the network: rank(E) - rank(nu*E), over the rationals.
pub fn deficiency(net: &ReactionNetwork) -> usize {
    let s = structure(net);
    linalg::rank(&s.incidence) - linalg::rank(&s.nu_e)
}

/// Integer basis of the left null space of a stoichiometric matrix; rows are
/// the conserved linear combinations of species counts.
pub fn conservation_basis(matrix: &[Vec<i64>]) -> Vec<Vec<i64>> {
    linalg::left_null_space(matrix)
}

/// The matrix A^f whose rows span the conservation laws of the fast
/// subsystem. ntilde = A^f * n is constant along every fast reaction and
/// labels fast simplexes.
pub fn fast_invariant_matrix(net: &ReactionNetwork) -> Result<Vec<Vec<i64>>> {
    if !net.has_fast() {
        return Err(Error::NoFastSubsystem);
    }
    let s = structure(net);
    Ok(conservation_basis(&s.nu_e_fast))
}

/// A strictly positive conservation law proves the state space bounded.
pub fn provably_bounded(net: &ReactionNetwork) -> bool {
    if let Some(caps) = &net.caps {
        if caps.iter().all(|&c| c < u64::MAX) {
            return true;
        }
    }
    let s = structure(net);
    let basis = conservation_basis(&s.nu_e);
    // Sound heuristic: if the non-negative basis rows jointly touch every
    // species, their sum is a strictly positive invariant.
    let m = net.species_count();
    let mut covered = vec![false; m];
    for row in basis.iter().filter(|r| r.iter().all(|&x| x >= 0)) {
        for (i, &x) in row.iter().enumerate() {
            if x > 0 {
                covered[i] = true;
            }
        }
    }
    covered.iter().all(|&c| c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn parses_simple_reversible_pair() {
        let net = parse_network(
            "species: A,B\nr1: A -> B rate=0.01 fast\nr2: B -> A rate=0.1 fast\ninit: A=100,B=1\n",
        )
        .unwrap();
        assert_eq!(net.species_count(), 2);
        assert_eq!(net.reaction_count(), 2);
        assert_eq!(net.complex_count(), 2);
        assert_eq!(net.initial_state, vec![100, 1]);
    }

    #[test]
    fn wilhelm_structure_matches_printed_matrices() {
        let net = parse_network(fixtures::WILHELM).unwrap();
        assert_eq!(net.species_count(), 3);
        assert_eq!(net.reaction_count(), 3);
        assert_eq!(net.complex_count(), 5);
        let s = structure(&net);
        assert_eq!(
            s.nu,
            vec![
                vec![1, 0, 0, 0, 0],
                vec![2, 3, 2, 1, 0],
                vec![0, 0, 1, 0, 1],
            ]
        );
        assert_eq!(
            s.incidence,
            vec![
                vec![-1, 0, 0],
                vec![1, -1, 0],
                vec![0, 1, 0],
                vec![0, 0, -1],
                vec![0, 0, 1],
            ]
        );
        assert_eq!(
            s.nu_e,
            vec![vec![-1, 0, 0], vec![1, -1, -1], vec![0, 1, 1]]
        );
        assert_eq!(linalg::rank(&s.incidence), 3);
        assert_eq!(linalg::rank(&s.nu_e), 2);
        assert_eq!(deficiency(&net), 1);
        assert_eq!(conservation_basis(&s.nu_e), vec![vec![1, 1, 1]]);
        // Trimolecular complexes warn but parse.
        assert!(!net.warnings.is_empty());
    }

    #[test]
    fn single_conversion_nu_e() {
        let net = parse_network("species: A,B\nr1: A -> B rate=1 slow\ninit: A=1\n").unwrap();
        let s = structure(&net);
        assert_eq!(s.nu_e, vec![vec![-1], vec![1]]);
        assert_eq!(deficiency(&net), 0);
    }

    #[test]
    fn triangular_nu_e_has_rank_two() {
        let net = fixtures::triangular(2, [10.0, 10.0, 0.1, 0.1, 0.1, 0.1]);
        let s = structure(&net);
        assert_eq!(linalg::rank(&s.nu_e), 2);
        assert_eq!(deficiency(&net), 0);
    }

    #[test]
    fn empty_reaction_list_is_an_error() {
        let err = parse_network("species: A\ninit: A=1\n").unwrap_err();
        assert!(err.to_string().contains("no reactions"));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_network("species: A,B\nr1: A -> B rate=-2 fast\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_network("species: A\ninit: A=1, Q=2\nr1: A -> 0 rate=1 slow\n").unwrap_err();
        assert!(err.to_string().contains("unknown species `Q`"));
        let err =
            parse_network("species: A,B\nr1: A -> B rate=1 fast\nr1: B -> A rate=1 fast\n")
                .unwrap_err();
        assert!(err.to_string().contains("duplicate reaction label"));
    }

    #[test]
    fn null_complex_and_prefixes() {
        let net = parse_network(
            "species: F,G\nr1: 0 -> F rate=1 slow\nr2: 2 F -> G rate=0.5 fast\ninit: F=4\ncap: F=10,G=5\n",
        )
        .unwrap();
        assert!(net.complexes.iter().any(|c| c.is_null()));
        let g = net.species_index("G").unwrap();
        let r2 = &net.reactions[1];
        assert_eq!(net.complexes[r2.reactant].coefficients, vec![2, 0]);
        assert_eq!(net.complexes[r2.product].coefficients[g], 1);
    }

    #[test]
    fn fast_invariants_of_triangular() {
        let net = fixtures::triangular(2, [10.0, 10.0, 0.1, 0.1, 0.1, 0.1]);
        let af = fast_invariant_matrix(&net).unwrap();
        assert_eq!(af, vec![vec![1, 1, 0], vec![0, 0, 1]]);
    }

    #[test]
    fn fast_invariants_of_enzyme_span_paper_rows() {
        let net = parse_network(fixtures::ENZYME).unwrap();
        let af = fast_invariant_matrix(&net).unwrap();
        assert_eq!(af.len(), 4);
        let s = structure(&net);
        for row in &af {
            assert!(linalg::annihilates(row, &s.nu_e_fast));
        }
        for expected in [
            vec![1, 0, 1, 0, 1, 0],
            vec![0, 1, 1, 0, 0, 0],
            vec![0, 0, 0, 1, 1, 0],
            vec![0, 0, 0, 0, 0, 1],
        ] {
            assert!(linalg::in_row_span(&expected, &af), "{expected:?}");
        }
    }

    #[test]
    fn all_fast_reduces_to_full_conservation_basis() {
        let net =
            parse_network("species: A,B\nr1: A -> B rate=1 fast\nr2: B -> A rate=2 fast\ninit: A=3\n")
                .unwrap();
        let af = fast_invariant_matrix(&net).unwrap();
        let s = structure(&net);
        assert_eq!(af, conservation_basis(&s.nu_e));
        assert_eq!(af, vec![vec![1, 1]]);
    }

    #[test]
    fn no_fast_reactions_is_an_error() {
        let net = parse_network("species: A,B\nr1: A -> B rate=1 slow\ninit: A=1\n").unwrap();
        assert!(matches!(
            fast_invariant_matrix(&net),
            Err(Error::NoFastSubsystem)
        ));
    }

    #[test]
    fn display_round_trips() {
        for text in [
            fixtures::WILHELM,
            fixtures::ENZYME,
            fixtures::AB,
            fixtures::BIRTH_DEATH,
            fixtures::INPUT_AB,
            fixtures::NETWORK1,
            fixtures::NETWORK2,
            fixtures::NETWORK3,
            fixtures::PFK,
        ] {
            let net = parse_network(text).unwrap();
            let printed = net.to_string();
            let reparsed = parse_network(&printed).unwrap();
            assert_eq!(strip_warnings(&net), strip_warnings(&reparsed), "{printed}");
        }
    }

    fn strip_warnings(net: &ReactionNetwork) -> ReactionNetwork {
        let mut n = net.clone();
        n.warnings.clear();
        n
    }

    #[test]
    fn boundedness_detection() {
        let closed = parse_network(fixtures::ENZYME).unwrap();
        assert!(provably_bounded(&closed));
        let open = parse_network(
            "species: A\nr1: 0 -> A rate=2 slow\nr2: A -> 0 rate=1 slow\ninit: A=1\n",
        )
        .unwrap();
        assert!(!provably_bounded(&open));
        let capped = parse_network(fixtures::BIRTH_DEATH).unwrap();
        assert!(provably_bounded(&capped));
    }
}
