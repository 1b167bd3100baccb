//! Shared builders and independent oracles for the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::rngs::StdRng;
use rand::Rng;

use casecalc_core::confirmation::EvidenceAssessment;
use casecalc_core::defeaters::Label;
use casecalc_core::document::{parse, CaseDocument};
use casecalc_core::graph::{BlockKind, CaseGraph, Link, Node, NodeId};
use casecalc_core::propagation::ConfidenceAssignment;

// ---------------------------------------------------------------- fixtures

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// Fixture names, sorted.
pub fn fixture_names() -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(fixtures_dir())
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path();
            (p.extension()? == "json")
                .then(|| p.file_stem().unwrap().to_string_lossy().into_owned())
        })
        .collect();
    names.sort();
    names
}

pub fn fixture_bytes(name: &str) -> Vec<u8> {
    std::fs::read(fixtures_dir().join(format!("{name}.json"))).unwrap()
}

pub fn load(name: &str) -> CaseDocument {
    parse(&fixture_bytes(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

// ------------------------------------------------------- exact arithmetic

pub type Q = BigRational;

pub fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn f(x: &Q) -> f64 {
    x.to_f64().unwrap()
}

/// Rounds half away from zero to `digits` decimals, returned as an integer
/// count of 10^-digits units.
pub fn round_half_away(x: &Q, digits: u32) -> i64 {
    let scaled = x * Q::from_integer(BigInt::from(10).pow(digits));
    let half = q(1, 2);
    let r = if scaled.is_negative() {
        -((-scaled) + half).floor()
    } else {
        (scaled + half).floor()
    };
    r.to_integer().to_i64().unwrap()
}

/// Exact probabilities of a two-variable joint over C and E.
#[derive(Debug, Clone)]
pub struct Joint2 {
    pub c_e: Q,
    pub c_ne: Q,
    pub nc_e: Q,
    pub nc_ne: Q,
}

impl Joint2 {
    /// Cells from non-negative weights; they are normalized.
    pub fn from_weights(w: [i64; 4]) -> Self {
        let total: i64 = w.iter().sum();
        Self {
            c_e: q(w[0], total),
            c_ne: q(w[1], total),
            nc_e: q(w[2], total),
            nc_ne: q(w[3], total),
        }
    }

    pub fn p_c(&self) -> Q {
        &self.c_e + &self.c_ne
    }
    pub fn p_e(&self) -> Q {
        &self.c_e + &self.nc_e
    }
    pub fn p_c_given_e(&self) -> Q {
        &self.c_e / self.p_e()
    }
    pub fn p_e_given_c(&self) -> Q {
        &self.c_e / self.p_c()
    }
    pub fn p_e_given_not_c(&self) -> Q {
        &self.nc_e / (Q::one() - self.p_c())
    }

    /// Every field filled in, each rounded once from its exact value.
    pub fn assessment(&self) -> EvidenceAssessment {
        EvidenceAssessment::new(f(&self.p_c()), f(&self.p_c_given_e()))
            .with_p_e(f(&self.p_e()))
            .with_likelihoods(f(&self.p_e_given_c()), f(&self.p_e_given_not_c()))
    }

    /// Sign of P(C|E) − P(C), exactly.
    pub fn relevance(&self) -> i8 {
        let d = self.p_c_given_e() - self.p_c();
        if d.is_zero() {
            0
        } else if d.is_positive() {
            1
        } else {
            -1
        }
    }
}

pub fn random_joint(rng: &mut StdRng) -> Joint2 {
    let mut w = [0i64; 4];
    for x in &mut w {
        *x = rng.gen_range(1..=60);
    }
    Joint2::from_weights(w)
}

/// A joint where E is exactly irrelevant to C: P(C,E) = P(C)P(E).
pub fn independent_joint(rng: &mut StdRng) -> Joint2 {
    let a = rng.gen_range(1..20i64);
    let b = rng.gen_range(1..20i64);
    let c = rng.gen_range(1..20i64);
    let d = rng.gen_range(1..20i64);
    // P(C) = a/(a+b), P(E) = c/(c+d)
    Joint2::from_weights([a * c, a * d, b * c, b * d])
}

/// Good's raven worlds with equal priors. Returns the joint over
/// C = "all ravens are black" (world 1) and E = "the bird drawn is a black raven".
pub fn raven_joint() -> Joint2 {
    let half = q(1, 2);
    let e_w1 = q(100, 100 + 1_000_000);
    let e_w2 = q(1000, 1000 + 1 + 1_000_000);
    Joint2 {
        c_e: &half * &e_w1,
        c_ne: &half * (Q::one() - &e_w1),
        nc_e: &half * &e_w2,
        nc_ne: &half * (Q::one() - &e_w2),
    }
}

// ------------------------------------------------------ high precision

const DIGITS: u32 = 400;

fn scale() -> BigInt {
    BigInt::from(10).pow(DIGITS)
}

fn fixed(x: f64) -> BigInt {
    let r = Q::from_float(x).unwrap();
    (r.numer() * scale()) / r.denom()
}

fn unfixed(x: &BigInt) -> f64 {
    Q::new(x.clone(), scale()).to_f64().unwrap_or(0.0)
}

/// ln(1 − p) for 0 ≤ p < 1 by its power series.
fn ln_one_minus(p: &BigInt) -> BigInt {
    let s = scale();
    let mut sum = BigInt::zero();
    let mut power = p.clone();
    let mut k = 1u32;
    loop {
        let term = &power / k;
        if term.is_zero() {
            break;
        }
        sum -= term;
        power = &power * p / &s;
        k += 1;
    }
    sum
}

/// exp(x) for x ≤ 0 by halving, series and repeated squaring.
fn exp_nonpositive(x: &BigInt) -> BigInt {
    let s = scale();
    let mut x = x.clone();
    let mut halvings = 0;
    while -&x > s {
        x /= 2;
        halvings += 1;
    }
    let mut sum = s.clone();
    let mut term = s.clone();
    let mut i = 1u32;
    loop {
        term = &term * &x / &s / i;
        if term.is_zero() {
            break;
        }
        sum += &term;
        i += 1;
    }
    for _ in 0..halvings {
        sum = &sum * &sum / &s;
    }
    sum
}

/// P_conf + (1 − P_conf)(1 − p_fif)^n with 400 significant decimal places.
pub fn psrv_oracle(p_conf: f64, p_fif: f64, n: u64) -> f64 {
    let s = scale();
    let c = fixed(p_conf);
    let survive = if n == 0 {
        s.clone()
    } else if p_fif >= 1.0 {
        BigInt::zero()
    } else {
        exp_nonpositive(&(ln_one_minus(&fixed(p_fif)) * BigInt::from(n)))
    };
    unfixed(&(&c + (&s - &c) * survive / &s))
}

// ------------------------------------------------------- labeling oracle

/// Grounded labeling by enumerating every legal labeling. A legal labeling
/// is fixed by its In set (Out is then everything attacked from In), so all
/// 2^n In sets are tried and the legal one with the least In is kept.
pub fn brute_grounded(n: usize, attacks: &[(usize, usize)]) -> Vec<Label> {
    assert!(n <= 16);
    let mut attackers = [0u32; 16];
    let mut targets = [0u32; 16];
    for &(a, b) in attacks {
        attackers[b] |= 1 << a;
        targets[a] |= 1 << b;
    }
    brute_grounded_masks(n, &attackers[..n], &targets[..n])
}

/// Same as [`brute_grounded`] for a digraph given as an [`edges_of`] mask.
#[allow(clippy::needless_range_loop)]
pub fn brute_grounded_mask(n: usize, mask: u64) -> Vec<Label> {
    let mut attackers = [0u32; 8];
    let mut targets = [0u32; 8];
    for i in 0..n {
        for j in 0..n {
            if mask & (1 << (i * n + j)) != 0 {
                attackers[j] |= 1 << i;
                targets[i] |= 1 << j;
            }
        }
    }
    brute_grounded_masks(n, &attackers[..n], &targets[..n])
}

fn brute_grounded_masks(n: usize, attackers: &[u32], targets: &[u32]) -> Vec<Label> {
    let mut least: Option<(u32, u32)> = None;
    let mut common_in = u32::MAX;
    for s in 0u32..(1 << n) {
        let mut out = 0u32;
        for (v, t) in targets.iter().enumerate() {
            if s & (1 << v) != 0 {
                out |= t;
            }
        }
        if s & out != 0 {
            continue;
        }
        // in iff every attacker is out
        let mut all_out = 0u32;
        for (v, a) in attackers.iter().enumerate() {
            if a & !out == 0 {
                all_out |= 1 << v;
            }
        }
        if all_out != s {
            continue;
        }
        common_in &= s;
        if least.is_none_or(|(l, _)| s.count_ones() < l.count_ones()) {
            least = Some((s, out));
        }
    }
    let (least, out) = least.expect("a legal labeling always exists");
    assert_eq!(
        common_in, least,
        "least In set must be contained in every legal In set"
    );
    (0..n)
        .map(|v| {
            if least & (1 << v) != 0 {
                Label::In
            } else if out & (1 << v) != 0 {
                Label::Out
            } else {
                Label::Undecided
            }
        })
        .collect()
}

/// Loop-free digraph on `n` nodes, edge (i, j) stored at bit i*n + j.
pub fn edges_of(n: usize, mask: u64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if mask & (1 << (i * n + j)) != 0 {
                out.push((i, j));
            }
        }
    }
    out
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for at in 0..=p.len() {
            let mut q = p.clone();
            q.insert(at, n - 1);
            out.push(q);
        }
    }
    out
}

pub fn canonical(n: usize, mask: u64, perms: &[Vec<usize>]) -> u64 {
    let edges = edges_of(n, mask);
    perms
        .iter()
        .map(|p| {
            edges
                .iter()
                .fold(0u64, |m, &(i, j)| m | 1 << (p[i] * n + p[j]))
        })
        .min()
        .unwrap()
}

/// One loop-free digraph per isomorphism class on `n` nodes, n ≤ 5.
pub fn digraph_classes(n: usize) -> Vec<u64> {
    assert!(n <= 5);
    let mut reps = vec![0u64];
    for size in 1..=n {
        let perms = permutations(size);
        let mut seen = HashSet::new();
        for g in &reps {
            for ext in extensions(size, *g) {
                seen.insert(canonical(size, ext, &perms));
            }
        }
        let mut next: Vec<u64> = seen.into_iter().collect();
        next.sort_unstable();
        reps = next;
    }
    reps
}

/// (in-degree, out-degree) of node `v`, ordered lexicographically.
fn degree_key(n: usize, mask: u64, v: usize) -> (u32, u32) {
    let mut indeg = 0;
    let mut outdeg = 0;
    for u in 0..n {
        indeg += (mask >> (u * n + v) & 1) as u32;
        outdeg += (mask >> (v * n + u) & 1) as u32;
    }
    (indeg, outdeg)
}

/// Digraphs on `size` nodes covering every isomorphism class, given one
/// representative per class on `size - 1` nodes. Any graph has a node whose
/// degree pair is maximal; deleting it leaves some smaller class, so keeping
/// only extensions whose new node is maximal still reaches every class.
pub fn covering_extensions(size: usize, classes: &[u64]) -> impl Iterator<Item = u64> + '_ {
    let new = size - 1;
    classes.iter().flat_map(move |&g| {
        extensions(size, g).filter(move |&m| {
            let top = degree_key(size, m, new);
            (0..new).all(|v| degree_key(size, m, v) <= top)
        })
    })
}

/// Every digraph on `size` nodes whose first `size - 1` nodes carry `g`:
/// the old graph re-indexed, plus all in/out edge choices of the new node.
pub fn extensions(size: usize, g: u64) -> impl Iterator<Item = u64> {
    let old = size - 1;
    let mut base = 0u64;
    for (i, j) in edges_of(old, g) {
        base |= 1 << (i * size + j);
    }
    let new = old;
    (0u64..(1 << (2 * old))).map(move |choice| {
        let mut m = base;
        for k in 0..old {
            if choice & (1 << k) != 0 {
                m |= 1 << (k * size + new);
            }
            if choice & (1 << (old + k)) != 0 {
                m |= 1 << (new * size + k);
            }
        }
        m
    })
}

/// 8-cell joints over (C1, C2, E) with weights summing to `total`.
pub fn for_each_joint(total: i64, mut f: impl FnMut(&[i64; 8])) {
    fn rec(i: usize, left: i64, w: &mut [i64; 8], f: &mut dyn FnMut(&[i64; 8])) {
        if i == 7 {
            w[7] = left;
            f(w);
            return;
        }
        for x in 0..=left {
            w[i] = x;
            rec(i + 1, left - x, w, f);
        }
    }
    let mut w = [0; 8];
    rec(0, total, &mut w, &mut f);
}

/// Cell index bits: 4 = C1, 2 = C2, 1 = E.
pub fn prob(w: &[i64; 8], pred: impl Fn(bool, bool, bool) -> bool) -> i64 {
    (0..8)
        .filter(|&i| pred(i & 4 != 0, i & 2 != 0, i & 1 != 0))
        .map(|i| w[i])
        .sum()
}

pub struct ClosureCase {
    pub prior: [f64; 3],
    pub posterior: [f64; 3],
}

/// Joints with C1 ⟂ C2 and C1 ⟂ C2 | E, all marginals strictly inside (0, 1).
pub fn independent_pairs(total: i64) -> Vec<ClosureCase> {
    let mut out = Vec::new();
    for_each_joint(total, |w| {
        let n = total;
        let e = prob(w, |_, _, e| e);
        let c1 = prob(w, |a, _, _| a);
        let c2 = prob(w, |_, b, _| b);
        let c12 = prob(w, |a, b, _| a && b);
        let c1e = prob(w, |a, _, e| a && e);
        let c2e = prob(w, |_, b, e| b && e);
        let c12e = prob(w, |a, b, e| a && b && e);
        if e == 0 || c12 * n != c1 * c2 || c12e * e != c1e * c2e {
            return;
        }
        let inside = |x: i64, of: i64| x > 0 && x < of;
        if !(inside(c1, n) && inside(c2, n) && inside(c1e, e) && inside(c2e, e)) {
            return;
        }
        let r = |x: i64, of: i64| x as f64 / of as f64;
        out.push(ClosureCase {
            prior: [r(c1, n), r(c2, n), r(c12, n)],
            posterior: [r(c1e, e), r(c2e, e), r(c12e, e)],
        });
    });
    out
}

// ------------------------------------------------------ graph builders

/// Top claim C supported by one decomposition step over `n` subclaims of
/// confidence `s` and a side-claim of confidence `w`.
pub fn conftab_case(n: usize, s: f64, w: f64) -> (CaseGraph, Vec<ConfidenceAssignment>) {
    let mut g = CaseGraph::with_top_claim(Node::claim("C", "top")).unwrap();
    g.add_node(Node::step("S", BlockKind::Decomposition))
        .unwrap();
    g.add_link(Link::logical("S", "C")).unwrap();
    g.add_node(Node::claim("W", "side").side_claim()).unwrap();
    g.add_link(Link::logical("W", "S")).unwrap();
    let mut inputs = vec![ConfidenceAssignment::evidence("W", w)];
    for i in 0..n {
        let id = format!("S{i}");
        g.add_node(Node::claim(id.as_str(), "")).unwrap();
        g.add_link(Link::logical(id.as_str(), "S")).unwrap();
        inputs.push(ConfidenceAssignment::evidence(id.as_str(), s));
    }
    (g, inputs)
}

/// Uniform tree of the given depth: every step has three subclaims and a
/// side-claim, all four supported by subtrees one level lower; leaves take
/// `leaf`. Returns the graph, leaf inputs and the claim ids per level
/// (level 0 = leaves).
pub fn uniform_tree(
    depth: usize,
    leaf: f64,
) -> (CaseGraph, Vec<ConfidenceAssignment>, Vec<Vec<NodeId>>) {
    let mut g = CaseGraph::with_top_claim(Node::claim("T", "top")).unwrap();
    let mut inputs = Vec::new();
    let mut levels: Vec<Vec<NodeId>> = vec![Vec::new(); depth + 1];
    let mut counter = 0usize;
    fn grow(
        g: &mut CaseGraph,
        inputs: &mut Vec<ConfidenceAssignment>,
        levels: &mut Vec<Vec<NodeId>>,
        counter: &mut usize,
        claim: NodeId,
        level: usize,
        leaf: f64,
    ) {
        levels[level].push(claim.clone());
        if level == 0 {
            inputs.push(ConfidenceAssignment::evidence(claim, leaf));
            return;
        }
        *counter += 1;
        let step = NodeId::new(format!("S{counter}"));
        g.add_node(Node::step(step.clone(), BlockKind::Decomposition))
            .unwrap();
        g.add_link(Link::logical(step.clone(), claim)).unwrap();
        for k in 0..4 {
            *counter += 1;
            let child = NodeId::new(format!("C{counter}"));
            let node = Node::claim(child.clone(), "");
            g.add_node(if k == 3 { node.side_claim() } else { node })
                .unwrap();
            g.add_link(Link::logical(child.clone(), step.clone()))
                .unwrap();
            grow(g, inputs, levels, counter, child, level - 1, leaf);
        }
    }
    grow(
        &mut g,
        &mut inputs,
        &mut levels,
        &mut counter,
        NodeId::new("T"),
        depth,
        leaf,
    );
    (g, inputs, levels)
}

/// A random logically valid case together with the leaf values it was
/// given and, independently of the engine, the number of logical paths
/// from each value-carrying leaf up to the top claim.
pub struct RandomCase {
    pub graph: CaseGraph,
    pub inputs: Vec<ConfidenceAssignment>,
    pub leaves: BTreeMap<NodeId, f64>,
    pub paths: BTreeMap<NodeId, usize>,
}

impl RandomCase {
    pub fn product_oracle(&self) -> f64 {
        self.paths
            .iter()
            .map(|(id, k)| self.leaves[id].powi(*k as i32))
            .product()
    }

    pub fn doubt_oracle(&self) -> f64 {
        1.0 - self
            .paths
            .iter()
            .map(|(id, k)| *k as f64 * (1.0 - self.leaves[id]))
            .fold(0.0, |a, b| a + b)
    }
}

/// Builds a random valid case with at most `max_nodes` nodes. Some leaf
/// claims are shared between steps (cross links).
pub fn random_case(rng: &mut StdRng, max_nodes: usize) -> RandomCase {
    let mut g = CaseGraph::with_top_claim(Node::claim("C0", "top")).unwrap();
    let mut inputs = Vec::new();
    let mut leaves = BTreeMap::new();
    // contributing children of each node, as the generator built them
    let mut below: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    let mut frontier = vec![NodeId::new("C0")];
    let mut leaf_claims: Vec<NodeId> = Vec::new();
    let mut next = 1usize;
    let mut fresh = |prefix: &str| {
        next += 1;
        NodeId::new(format!("{prefix}{next}"))
    };

    while let Some(claim) = frontier.pop() {
        let room = max_nodes.saturating_sub(g.len() + frontier.len());
        if room < 7 || rng.gen_bool(0.25) && claim.as_str() != "C0" {
            let v = rng.gen_range(0.5..=1.0);
            let node = g.node(&claim).unwrap().clone();
            if rng.gen_bool(0.3)
                && !node
                    .roles
                    .contains(&casecalc_core::graph::RoleFlag::SideClaim)
            {
                g.replace_node(node.assumption()).unwrap();
                inputs.push(ConfidenceAssignment::assumption(claim.clone(), v));
            } else {
                inputs.push(ConfidenceAssignment::evidence(claim.clone(), v));
            }
            leaves.insert(claim.clone(), v);
            leaf_claims.push(claim);
            continue;
        }
        let block = match rng.gen_range(0..5) {
            0 => BlockKind::Substitution,
            1 => BlockKind::Concretion,
            2 => BlockKind::Calculation,
            3 => BlockKind::EvidenceIncorporation,
            _ => BlockKind::Decomposition,
        };
        let step = fresh("S");
        g.add_node(Node::step(step.clone(), block)).unwrap();
        g.add_link(Link::logical(step.clone(), claim.clone()))
            .unwrap();
        below.insert(claim.clone(), vec![step.clone()]);
        let mut kids = Vec::new();

        let subclaims = match block {
            BlockKind::Substitution | BlockKind::Concretion => 1,
            BlockKind::EvidenceIncorporation => 0,
            _ => rng.gen_range(1..=3),
        };
        let sides = rng.gen_range(
            0..=if block == BlockKind::EvidenceIncorporation {
                1
            } else {
                2
            },
        );
        for k in 0..subclaims + sides {
            let side = k >= subclaims;
            // reuse a finished leaf claim now and then
            if !side && !leaf_claims.is_empty() && rng.gen_bool(0.15) {
                let shared = leaf_claims[rng.gen_range(0..leaf_claims.len())].clone();
                let already = g.logical_children(&step).any(|c| *c == shared);
                let is_side = g
                    .node(&shared)
                    .is_some_and(|n| n.has_role(casecalc_core::graph::RoleFlag::SideClaim));
                if !already && !is_side {
                    g.add_link(Link::logical(shared.clone(), step.clone()))
                        .unwrap();
                    kids.push(shared);
                    continue;
                }
            }
            let c = fresh("C");
            let node = Node::claim(c.clone(), "");
            g.add_node(if side { node.side_claim() } else { node })
                .unwrap();
            g.add_link(Link::logical(c.clone(), step.clone())).unwrap();
            kids.push(c.clone());
            frontier.push(c);
        }
        if block == BlockKind::EvidenceIncorporation {
            let items = rng.gen_range(1..=2);
            let on_step = rng.gen_bool(0.5);
            for _ in 0..items {
                let e = fresh("E");
                g.add_node(Node::evidence(e.clone(), "")).unwrap();
                g.add_link(Link::logical(e.clone(), step.clone())).unwrap();
                if !on_step {
                    let v = rng.gen_range(0.5..=1.0);
                    inputs.push(ConfidenceAssignment::evidence(e.clone(), v));
                    leaves.insert(e.clone(), v);
                    kids.push(e);
                }
            }
            if on_step {
                let v = rng.gen_range(0.5..=1.0);
                inputs.push(ConfidenceAssignment::evidence(step.clone(), v));
                leaves.insert(step.clone(), v);
                kids.push(step.clone());
            }
        }
        below.insert(step.clone(), kids);
    }

    let mut paths = BTreeMap::new();
    fn walk(
        id: &NodeId,
        k: usize,
        below: &BTreeMap<NodeId, Vec<NodeId>>,
        leaves: &BTreeMap<NodeId, f64>,
        paths: &mut BTreeMap<NodeId, usize>,
    ) {
        if leaves.contains_key(id) {
            *paths.entry(id.clone()).or_insert(0) += k;
            // a valued evidence step still passes through to its side-claims
            if let Some(kids) = below.get(id) {
                for c in kids.iter().filter(|c| *c != id) {
                    walk(c, k, below, leaves, paths);
                }
            }
            return;
        }
        for c in below.get(id).into_iter().flatten() {
            walk(c, k, below, leaves, paths);
        }
    }
    walk(&NodeId::new("C0"), 1, &below, &leaves, &mut paths);
    RandomCase {
        graph: g,
        inputs,
        leaves,
        paths,
    }
}
