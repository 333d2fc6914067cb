//! Structure of the fast state-transition graph: connected components,
//! strong-component classification, fast simplexes and the canonical state
//! ordering that block-triangularizes the fast generator.

use std::collections::VecDeque;

use crate::statespace::{Generator, StateSpace};

/// Classification of a strong component inside its fast component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SccKind {
    /// No incoming fast edges from other strong components.
    Source,
    /// Both incoming and outgoing fast edges.
    Internal,
    /// No outgoing fast edges; carries the invariant distribution.
    Absorbing,
}

impl std::fmt::Display for SccKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SccKind::Source => write!(f, "source"),
            SccKind::Internal => write!(f, "internal"),
            SccKind::Absorbing => write!(f, "absorbing"),
        }
    }
}

/// A strong component of the directed fast graph.
#[derive(Debug, Clone)]
pub struct Scc {
    pub id: usize,
    pub component: usize,
    /// Member state indices, ascending.
    pub members: Vec<usize>,
    pub kind: SccKind,
}

/// A connected component of the undirected fast graph; one diagonal block of
/// the fast generator. The scc id lists are in canonical order.
#[derive(Debug, Clone)]
pub struct FastComponent {
    pub id: usize,
    /// Member state indices, ascending.
    pub members: Vec<usize>,
    pub absorbing: Vec<usize>,
    pub internal: Vec<usize>,
    pub source: Vec<usize>,
}

impl FastComponent {
    /// All scc ids in canonical order: absorbing, internal (reverse
    /// topological), sources.
    pub fn scc_order(&self) -> impl Iterator<Item = usize> + '_ {
        self.absorbing
            .iter()
            .chain(&self.internal)
            .chain(&self.source)
            .copied()
    }

    pub fn is_strongly_connected(&self) -> bool {
        self.absorbing.len() == 1 && self.internal.is_empty() && self.source.is_empty()
    }
}

/// Permutation that groups states by fast component and, within each
/// component, orders them [absorbing | internal | source].
#[derive(Debug, Clone)]
pub struct CanonicalOrdering {
    /// perm[k] = state index occupying canonical position k.
    pub perm: Vec<usize>,
    /// inv[state] = canonical position of the state.
    pub inv: Vec<usize>,
}

/// Full decomposition of the fast graph.
#[derive(Debug, Clone)]
pub struct FastStructure {
    pub components: Vec<FastComponent>,
    pub sccs: Vec<Scc>,
    pub ordering: CanonicalOrdering,
    /// Absorbing scc ids across all components, in canonical order; this is
    /// the index set of the aggregated states.
    pub absorbing_sccs: Vec<usize>,
    pub scc_of_state: Vec<usize>,
    pub component_of_state: Vec<usize>,
}

impl FastStructure {
    pub fn aggregated_count(&self) -> usize {
        self.absorbing_sccs.len()
    }

    /// Position of a state's scc in its component's canonical scc order;
    /// used to verify block triangularity.
    pub fn scc_position(&self, state: usize) -> usize {
        let comp = &self.components[self.component_of_state[state]];
        let scc = self.scc_of_state[state];
        comp.scc_order().position(|s| s == scc).expect("scc in component")
    }
}

/// A fast simplex: one absorbing strong component together with every source
/// and internal strong component that can reach it.
#[derive(Debug, Clone)]
pub struct FastSimplex {
    pub id: usize,
    pub absorbing_scc: usize,
    /// Member state indices, ascending. Non-absorbing members may be shared
    /// with other simplexes.
    pub member_states: Vec<usize>,
    /// Invariant label ntilde = A^f n of a representative absorbing state.
    pub label: Vec<i64>,
}

/// Iterative Tarjan strong components. Emission order is reverse topological
/// (a component is emitted only after everything reachable from it), which is
/// exactly the order that makes the permuted fast blocks upper triangular.
/// An explicit stack avoids recursion-depth limits on long chains.
fn tarjan(out: &[Vec<usize>]) -> (Vec<Vec<usize>>, Vec<usize>) {
    let n = out.len();
    const UNSET: usize = usize::MAX;
    let mut index = vec![UNSET; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut next_index = 0usize;
    let mut sccs: Vec<Vec<usize>> = Vec::new();
    let mut scc_of = vec![UNSET; n];

    // Work frame: (node, next edge offset).
    let mut work: Vec<(usize, usize)> = Vec::new();
    for seed in 0..n {
        if index[seed] != UNSET {
            continue;
        }
        work.push((seed, 0));
        while let Some(&mut (v, ref mut ei)) = work.last_mut() {
            if *ei == 0 {
                index[v] = next_index;
                low[v] = next_index;
                next_index += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if let Some(&w) = out[v].get(*ei) {
                *ei += 1;
                if index[w] == UNSET {
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                if low[v] == index[v] {
                    let mut members = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        scc_of[w] = sccs.len();
                        members.push(w);
                        if w == v {
                            break;
                        }
                    }
                    members.sort_unstable();
                    sccs.push(members);
                }
                work.pop();
                if let Some(&mut (u, _)) = work.last_mut() {
                    low[u] = low[u].min(low[v]);
                }
            }
        }
    }
    (sccs, scc_of)
}

/// Decompose the fast graph of `fast` into components and classified strong
/// components, and derive the canonical ordering.
pub fn analyze(fast: &Generator) -> FastStructure {
    let n = fast.dim();
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut undirected: Vec<Vec<usize>> = vec![Vec::new(); n];
    for j in 0..n {
        for &(i, rate) in fast.column(j) {
            if rate > 0.0 {
                out[j].push(i);
                undirected[j].push(i);
                undirected[i].push(j);
            }
        }
    }
    for adj in out.iter_mut().chain(undirected.iter_mut()) {
        adj.sort_unstable();
        adj.dedup();
    }

    // Undirected connected components; seeding in ascending state order makes
    // component ids sorted by smallest member.
    let mut component_of_state = vec![usize::MAX; n];
    let mut component_members: Vec<Vec<usize>> = Vec::new();
    for seed in 0..n {
        if component_of_state[seed] != usize::MAX {
            continue;
        }
        let id = component_members.len();
        let mut members = vec![seed];
        component_of_state[seed] = id;
        let mut queue = VecDeque::from([seed]);
        while let Some(v) = queue.pop_front() {
            for &w in &undirected[v] {
                if component_of_state[w] == usize::MAX {
                    component_of_state[w] = id;
                    members.push(w);
                    queue.push_back(w);
                }
            }
        }
        members.sort_unstable();
        component_members.push(members);
    }

    let (scc_members, scc_of_state) = tarjan(&out);
    let n_scc = scc_members.len();

    // Condensation in/out degrees decide the kind of each scc.
    let mut has_out = vec![false; n_scc];
    let mut has_in = vec![false; n_scc];
    let mut cond_out: Vec<Vec<usize>> = vec![Vec::new(); n_scc];
    for j in 0..n {
        for &i in &out[j] {
            let (sj, si) = (scc_of_state[j], scc_of_state[i]);
            if sj != si {
                has_out[sj] = true;
                has_in[si] = true;
                cond_out[sj].push(si);
            }
        }
    }
    for adj in cond_out.iter_mut() {
        adj.sort_unstable();
        adj.dedup();
    }

    let sccs: Vec<Scc> = scc_members
        .into_iter()
        .enumerate()
        .map(|(id, members)| {
            let kind = if !has_out[id] {
                SccKind::Absorbing
            } else if !has_in[id] {
                SccKind::Source
            } else {
                SccKind::Internal
            };
            Scc {
                id,
                component: component_of_state[members[0]],
                members,
                kind,
            }
        })
        .collect();

    let mut components = Vec::new();
    for (id, members) in component_members.into_iter().enumerate() {
        let mut absorbing: Vec<usize> = Vec::new();
        let mut internal: Vec<usize> = Vec::new();
        let mut source: Vec<usize> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for &s in &members {
            let sid = scc_of_state[s];
            if seen.insert(sid) {
                match sccs[sid].kind {
                    SccKind::Absorbing => absorbing.push(sid),
                    SccKind::Internal => internal.push(sid),
                    SccKind::Source => source.push(sid),
                }
            }
        }
        let min_member = |sid: &usize| sccs[*sid].members[0];
        absorbing.sort_unstable_by_key(min_member);
        source.sort_unstable_by_key(min_member);
        internal = reverse_topological(&internal, &cond_out, &sccs);
        assert!(
            !absorbing.is_empty(),
            "fast component {id} has no absorbing strong component"
        );
        components.push(FastComponent {
            id,
            members,
            absorbing,
            internal,
            source,
        });
    }

    let mut perm = Vec::with_capacity(n);
    let mut absorbing_sccs = Vec::new();
    for comp in &components {
        for sid in comp.scc_order() {
            perm.extend_from_slice(&sccs[sid].members);
        }
        absorbing_sccs.extend_from_slice(&comp.absorbing);
    }
    let mut inv = vec![0usize; n];
    for (k, &s) in perm.iter().enumerate() {
        inv[s] = k;
    }

    FastStructure {
        components,
        sccs,
        ordering: CanonicalOrdering { perm, inv },
        absorbing_sccs,
        scc_of_state,
        component_of_state,
    }
}

/// Order internal sccs so that successors (closer to absorption) come first.
/// Kahn's algorithm on the condensation restricted to internals, always
/// picking the candidate with the smallest member state.
fn reverse_topological(internal: &[usize], cond_out: &[Vec<usize>], sccs: &[Scc]) -> Vec<usize> {
    let set: std::collections::HashSet<usize> = internal.iter().copied().collect();
    let mut remaining: Vec<usize> = internal.to_vec();
    let mut placed = std::collections::HashSet::new();
    let mut order = Vec::with_capacity(internal.len());
    while !remaining.is_empty() {
        let ready: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&sid| {
                cond_out[sid]
                    .iter()
                    .all(|t| !set.contains(t) || placed.contains(t))
            })
            .collect();
        let &next = ready
            .iter()
            .min_by_key(|&&sid| sccs[sid].members[0])
            .expect("condensation is acyclic");
        placed.insert(next);
        remaining.retain(|&s| s != next);
        order.push(next);
    }
    order
}

/// One simplex per absorbing scc: the scc plus everything that can reach it
/// through fast transitions. Labels come from the fast invariant matrix.
pub fn fast_simplexes(
    structure: &FastStructure,
    fast: &Generator,
    space: &StateSpace,
    afast: &[Vec<i64>],
) -> Vec<FastSimplex> {
    let n_scc = structure.sccs.len();
    let mut cond_in: Vec<Vec<usize>> = vec![Vec::new(); n_scc];
    for j in 0..fast.dim() {
        for &(i, rate) in fast.column(j) {
            if rate > 0.0 {
                let (sj, si) = (structure.scc_of_state[j], structure.scc_of_state[i]);
                if sj != si {
                    cond_in[si].push(sj);
                }
            }
        }
    }
    for adj in cond_in.iter_mut() {
        adj.sort_unstable();
        adj.dedup();
    }

    structure
        .absorbing_sccs
        .iter()
        .enumerate()
        .map(|(id, &aid)| {
            let mut seen = vec![false; n_scc];
            seen[aid] = true;
            let mut queue = VecDeque::from([aid]);
            let mut member_states = Vec::new();
            while let Some(s) = queue.pop_front() {
                member_states.extend_from_slice(&structure.sccs[s].members);
                for &p in &cond_in[s] {
                    if !seen[p] {
                        seen[p] = true;
                        queue.push_back(p);
                    }
                }
            }
            member_states.sort_unstable();
            let rep = structure.sccs[aid].members[0];
            FastSimplex {
                id,
                absorbing_scc: aid,
                member_states,
                label: apply_invariant(afast, &space.states[rep]),
            }
        })
        .collect()
}

/// ntilde = A^f n.
pub fn apply_invariant(afast: &[Vec<i64>], n: &[u64]) -> Vec<i64> {
    afast
        .iter()
        .map(|row| row.iter().zip(n).map(|(&a, &x)| a * x as i64).sum())
        .collect()
}
