//! Growing preferential-attachment trees with initial attractiveness.
//!
//! Vertices are numbered in arrival order, so vertex `v >= 1` arrives at step
//! `v` and brings the edge `v - 1` to its parent. A new vertex attaches to an
//! existing one with probability proportional to `a + q`, where `q` is the
//! in-degree (number of children) and `a = 1/alpha - 1`.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tree_analytic::{rational_alpha, DistTable};

/// Largest tree handled by [`enumerate_exact`].
pub const ENUMERATION_MAX_TAU: usize = 8;

/// Growth parameters. `alpha = 1/(1+a)`; `alpha = 1` is the star limit
/// (`a = 0`) and `alpha = 0` is the uniform-attachment sentinel (`a -> inf`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub alpha: f64,
    pub tau: usize,
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
}

impl TreeParams {
    pub fn new(alpha: f64, tau: usize, seed: u64) -> Result<TreeParams> {
        let p = TreeParams { alpha, tau, seed, stream: 0 };
        p.validate()?;
        Ok(p)
    }

    /// Parameters from the initial attractiveness `a >= 0` (`f64::INFINITY` allowed).
    pub fn from_attractiveness(a: f64, tau: usize, seed: u64) -> Result<TreeParams> {
        if !(a >= 0.0) {
            return Err(invalid(format!("initial attractiveness must be >= 0, got {a}")));
        }
        let alpha = if a.is_infinite() { 0.0 } else { 1.0 / (1.0 + a) };
        TreeParams::new(alpha, tau, seed)
    }

    pub fn with_stream(mut self, stream: u64) -> TreeParams {
        self.stream = stream;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(invalid(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.tau == 0 {
            return Err(invalid("tau must be at least 1"));
        }
        Ok(())
    }

    /// Initial attractiveness `a = 1/alpha - 1` (infinite for the sentinel).
    pub fn attractiveness(&self) -> f64 {
        if self.alpha == 0.0 {
            f64::INFINITY
        } else {
            1.0 / self.alpha - 1.0
        }
    }
}

/// One edge of a grown tree, identified by its younger endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub edge_id: usize,
    /// Number of edges in the tree when this one was added.
    pub tau_e: usize,
    /// Vertices below the younger endpoint, excluding it.
    pub n: usize,
    pub q_younger: usize,
    pub q_older: usize,
    /// Edge betweenness `(n + 1)(tau - n)`.
    pub l: u64,
}

impl EdgeRecord {
    pub fn q_min(&self) -> usize {
        self.q_younger.min(self.q_older)
    }
}

/// A tree with `tau` edges and `tau + 1` vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowingTree {
    parent: Vec<usize>,
    in_degree: Vec<usize>,
    subtree_size: Vec<usize>,
    betweenness: Vec<u64>,
}

impl GrowingTree {
    /// Builds a tree from parent pointers; entry `v - 1` is the parent of vertex `v`,
    /// which must be an older vertex.
    pub fn from_parents(parents: Vec<usize>) -> Result<GrowingTree> {
        if parents.is_empty() {
            return Err(invalid("a tree needs at least one edge"));
        }
        let tau = parents.len();
        let mut parent = Vec::with_capacity(tau + 1);
        parent.push(usize::MAX);
        for (i, &p) in parents.iter().enumerate() {
            if p > i {
                return Err(invalid(format!("vertex {} attaches to younger vertex {p}", i + 1)));
            }
            parent.push(p);
        }
        let mut in_degree = vec![0usize; tau + 1];
        for &p in &parents {
            in_degree[p] += 1;
        }
        // Children are younger than parents, so one reverse sweep is a post-order pass.
        let mut size = vec![1usize; tau + 1];
        for v in (1..=tau).rev() {
            size[parent[v]] += size[v];
        }
        let subtree_size: Vec<usize> = (1..=tau).map(|v| size[v] - 1).collect();
        let betweenness = subtree_size.iter().map(|&n| ((n + 1) * (tau - n)) as u64).collect();
        Ok(GrowingTree { parent, in_degree, subtree_size, betweenness })
    }

    /// Path 0 - 1 - ... - tau rooted at vertex 0.
    pub fn path(tau: usize) -> Result<GrowingTree> {
        GrowingTree::from_parents((0..tau).collect())
    }

    /// Star with every vertex attached to the root.
    pub fn star(tau: usize) -> Result<GrowingTree> {
        GrowingTree::from_parents(vec![0; tau])
    }

    pub fn tau(&self) -> usize {
        self.parent.len() - 1
    }

    pub fn vertex_count(&self) -> usize {
        self.parent.len()
    }

    /// Parent of vertex `v`, `None` for the root.
    pub fn parent(&self, v: usize) -> Option<usize> {
        (v > 0).then(|| self.parent[v])
    }

    pub fn in_degree(&self) -> &[usize] {
        &self.in_degree
    }

    /// Arrival step of vertex `v`; vertices are numbered in arrival order.
    pub fn arrival_time(&self, v: usize) -> usize {
        v
    }

    /// Per-edge cluster size `n`.
    pub fn subtree_size(&self) -> &[usize] {
        &self.subtree_size
    }

    /// Per-edge betweenness `L`.
    pub fn betweenness(&self) -> &[u64] {
        &self.betweenness
    }

    /// Edge list as (younger, older) endpoint pairs, indexed by edge id.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (1..self.parent.len()).map(|v| (v, self.parent[v])).collect()
    }

    /// Vertex depths from the root.
    pub fn depths(&self) -> Vec<usize> {
        let mut depth = vec![0usize; self.parent.len()];
        for v in 1..self.parent.len() {
            depth[v] = depth[self.parent[v]] + 1;
        }
        depth
    }
}

/// Grows a tree of `params.tau` edges from a single root.
pub fn grow(params: &TreeParams) -> Result<GrowingTree> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(params.stream);
    let tau = params.tau;
    let a = params.attractiveness();
    let mut parents: Vec<usize> = Vec::with_capacity(tau);
    for t in 1..=tau {
        // t vertices (0..t) and t - 1 edges exist before vertex t arrives.
        let target = if t == 1 || params.alpha == 1.0 {
            0
        } else if params.alpha == 0.0 {
            rng.random_range(0..t)
        } else {
            // Split the total weight a*t + (t-1) into a uniform part and a
            // degree part; the degree part picks the parent of a uniform edge.
            let uniform_mass = a * t as f64;
            let u = rng.random::<f64>() * (uniform_mass + (t - 1) as f64);
            if u < uniform_mass {
                ((u / a) as usize).min(t - 1)
            } else {
                let e = ((u - uniform_mass) as usize).min(t - 2);
                parents[e]
            }
        };
        parents.push(target);
    }
    GrowingTree::from_parents(parents)
}

/// Per-edge records `(n, q_younger, q_older, L)`.
pub fn measure(tree: &GrowingTree) -> Vec<EdgeRecord> {
    let q = tree.in_degree();
    (0..tree.tau())
        .map(|e| {
            let v = e + 1;
            EdgeRecord {
                edge_id: e,
                tau_e: v,
                n: tree.subtree_size[e],
                q_younger: q[v],
                q_older: q[tree.parent[v]],
                l: tree.betweenness[e],
            }
        })
        .collect()
}

/// Sum over unordered vertex pairs of the path length, by breadth-first search
/// from every vertex. Quadratic; intended as a check on [`measure`].
pub fn pairwise_distance_sum(tree: &GrowingTree) -> u64 {
    let nv = tree.vertex_count();
    let mut adj = vec![Vec::new(); nv];
    for (c, p) in tree.edges() {
        adj[c].push(p);
        adj[p].push(c);
    }
    let mut total = 0u64;
    let mut dist = vec![usize::MAX; nv];
    let mut queue = std::collections::VecDeque::with_capacity(nv);
    for s in 0..nv {
        dist.fill(usize::MAX);
        dist[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &w in &adj[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    if w > s {
                        total += dist[w] as u64;
                    }
                    queue.push_back(w);
                }
            }
        }
    }
    total
}

/// Exact `P_tau(n, q)` for a uniformly chosen edge, by weighting every
/// attachment history with rational probabilities.
pub fn enumerate_exact_rational(params: &TreeParams) -> Result<BTreeMap<(usize, usize), BigRational>> {
    params.validate()?;
    let tau = params.tau;
    if tau > ENUMERATION_MAX_TAU {
        return Err(Error::Size(format!("enumeration supports tau <= {ENUMERATION_MAX_TAU}, got {tau}")));
    }
    let a = if params.alpha == 0.0 {
        None
    } else {
        let alpha = rational_alpha(params.alpha);
        Some((BigRational::one() - &alpha) / alpha)
    };
    let mut out = BTreeMap::new();
    let mut parents = Vec::with_capacity(tau);
    let weight = BigRational::one() / BigRational::from_integer(BigInt::from(tau));
    enumerate_rec(&mut parents, tau, a.as_ref(), &weight, &mut out);
    Ok(out)
}

fn enumerate_rec(
    parents: &mut Vec<usize>,
    tau: usize,
    a: Option<&BigRational>,
    weight: &BigRational,
    out: &mut BTreeMap<(usize, usize), BigRational>,
) {
    let t = parents.len() + 1;
    if t == tau + 1 {
        let tree = GrowingTree::from_parents(parents.clone()).expect("histories only attach to older vertices");
        let q = tree.in_degree();
        for e in 0..tau {
            let key = (tree.subtree_size[e], q[e + 1]);
            *out.entry(key).or_insert_with(BigRational::zero) += weight;
        }
        return;
    }
    let mut q = vec![0usize; t];
    for &p in parents.iter() {
        q[p] += 1;
    }
    let weights: Vec<BigRational> = match a {
        None => vec![BigRational::one(); t],
        Some(a) => q.iter().map(|&qv| a + BigRational::from_integer(BigInt::from(qv))).collect(),
    };
    let total: BigRational = weights.iter().fold(BigRational::zero(), |s, w| s + w);
    for v in 0..t {
        let pr = if total.is_zero() {
            // a = 0 with a lone root: the first edge must go there.
            BigRational::one()
        } else {
            &weights[v] / &total
        };
        if pr.is_zero() {
            continue;
        }
        parents.push(v);
        enumerate_rec(parents, tau, a, &(weight * pr), out);
        parents.pop();
    }
}

/// [`enumerate_exact_rational`] rounded into a table.
pub fn enumerate_exact(params: &TreeParams) -> Result<DistTable> {
    let exact = enumerate_exact_rational(params)?;
    let mut table = DistTable::zeros(Some(params.tau), params.alpha, params.tau);
    for ((n, q), p) in exact {
        table.set(n, q, crate::tree_analytic::rational_to_f64(&p));
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge() {
        let t = grow(&TreeParams::new(0.5, 1, 1).unwrap()).unwrap();
        let r = measure(&t);
        assert_eq!(r.len(), 1);
        assert_eq!((r[0].n, r[0].q_younger, r[0].q_older, r[0].l), (0, 0, 1, 1));
    }

    #[test]
    fn star_limit() {
        let t = grow(&TreeParams::new(1.0, 50, 3).unwrap()).unwrap();
        assert!(measure(&t).iter().all(|r| r.n == 0 && r.q_younger == 0 && r.l == 50));
        assert_eq!(t.in_degree()[0], 50);
    }

    #[test]
    fn path_betweenness() {
        let tau = 9;
        let t = GrowingTree::path(tau).unwrap();
        for r in measure(&t) {
            // Edge i counted from the leaf has n = i - 1.
            let i = tau - r.edge_id;
            assert_eq!(r.n, i - 1);
            assert_eq!(r.l, (i * (tau + 1 - i)) as u64);
        }
    }

    #[test]
    fn in_degrees_sum_to_tau() {
        for alpha in [0.0, 0.3, 0.5, 1.0] {
            let t = grow(&TreeParams::new(alpha, 2000, 7).unwrap()).unwrap();
            assert_eq!(t.in_degree().iter().sum::<usize>(), 2000);
            assert!(measure(&t).iter().all(|r| r.q_younger <= r.n));
        }
    }

    #[test]
    fn seeds_are_deterministic() {
        let p = TreeParams::new(0.5, 500, 11).unwrap();
        assert_eq!(grow(&p).unwrap(), grow(&p).unwrap());
        assert_ne!(grow(&p).unwrap(), grow(&p.with_stream(1)).unwrap());
    }

    #[test]
    fn enumeration_small_cases() {
        let one = enumerate_exact_rational(&TreeParams::new(0.5, 1, 0).unwrap()).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one[&(0, 0)].is_one());
        let two = enumerate_exact_rational(&TreeParams::new(0.5, 2, 0).unwrap()).unwrap();
        let keys: Vec<_> = two.keys().copied().collect();
        assert_eq!(keys, vec![(0, 0), (1, 1)]);
        let total = two.values().fold(BigRational::zero(), |s, p| s + p);
        assert!(total.is_one());
        assert!(enumerate_exact(&TreeParams::new(0.5, 9, 0).unwrap()).is_err());
    }

    #[test]
    fn rejects_bad_params() {
        assert!(TreeParams::new(1.5, 10, 0).is_err());
        assert!(TreeParams::new(0.5, 0, 0).is_err());
        assert_eq!(TreeParams::from_attractiveness(1.0, 5, 0).unwrap().alpha, 0.5);
        assert_eq!(TreeParams::from_attractiveness(f64::INFINITY, 5, 0).unwrap().alpha, 0.0);
    }
}
