//! Hierarchical navigable small-world graph over unit vectors.
//!
//! Distances are `1 - dot(a, b)`, which is cosine distance because every
//! stored vector and every query is normalized first. Node ids are dense
//! `u32` slots; deletion only tombstones a node, which keeps routing intact
//! and removes it from results.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::embedding::dot;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HnswParams {
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Node<F> {
    pub vector: Vec<F>,
    /// Neighbor lists for layers `0..=level`.
    pub links: Vec<Vec<u32>>,
    pub deleted: bool,
}

impl<F> Node<F> {
    pub fn level(&self) -> usize {
        self.links.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HnswGraph<F> {
    pub(crate) params: HnswParams,
    pub(crate) nodes: Vec<Node<F>>,
    pub(crate) entry: Option<u32>,
    pub(crate) max_level: usize,
}

#[derive(Clone, Copy)]
struct Candidate<F> {
    dist: F,
    id: u32,
}

impl<F: Scalar> PartialEq for Candidate<F> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<F: Scalar> Eq for Candidate<F> {}
impl<F: Scalar> PartialOrd for Candidate<F> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<F: Scalar> Ord for Candidate<F> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .partial_cmp(&other.dist)
            .unwrap_or(Ordering::Equal)
            .then(self.id.cmp(&other.id))
    }
}

impl<F: Scalar> HnswGraph<F> {
    pub fn new(params: HnswParams) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            entry: None,
            max_level: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn live_count(&self) -> usize {
        self.nodes.iter().filter(|n| !n.deleted).count()
    }

    pub fn is_deleted(&self, id: u32) -> bool {
        self.nodes[id as usize].deleted
    }

    pub fn mark_deleted(&mut self, id: u32) {
        self.nodes[id as usize].deleted = true;
    }

    fn max_links(&self, layer: usize) -> usize {
        if layer == 0 {
            self.params.m * 2
        } else {
            self.params.m
        }
    }

    /// Level for the node at `slot`, drawn from the exponential distribution
    /// with scale `1/ln(M)`. A hash of `(seed, slot)` stands in for the RNG so
    /// the graph depends only on insertion order.
    fn level_for(&self, slot: usize) -> usize {
        let mut z = self
            .params
            .seed
            .wrapping_add((slot as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
        // uniform in (0, 1]
        let u = ((z >> 11) as f64 + 1.0) / (1u64 << 53) as f64;
        let ml = 1.0 / (self.params.m.max(2) as f64).ln();
        ((-u.ln() * ml).floor() as usize).min(32)
    }

    fn distance(&self, query: &[F], id: u32) -> F {
        F::one() - dot(query, &self.nodes[id as usize].vector)
    }

    /// Inserts a unit vector and returns its slot id.
    pub fn insert(&mut self, vector: Vec<F>) -> u32 {
        let id = self.nodes.len() as u32;
        let level = self.level_for(id as usize);
        self.nodes.push(Node {
            vector,
            links: vec![Vec::new(); level + 1],
            deleted: false,
        });

        let Some(entry) = self.entry else {
            self.entry = Some(id);
            self.max_level = level;
            return id;
        };

        let query = self.nodes[id as usize].vector.clone();
        let mut ep = Candidate {
            dist: self.distance(&query, entry),
            id: entry,
        };
        for layer in (level + 1..=self.max_level).rev() {
            ep = self.greedy_closest(&query, ep, layer);
        }

        let mut entry_points = vec![ep];
        for layer in (0..=level.min(self.max_level)).rev() {
            let found = self.search_layer(&query, &entry_points, self.params.ef_construction, layer);
            // New nodes take the layer's full degree (2M on the base layer).
            let selected = self.select_neighbors(&found, self.max_links(layer));
            self.nodes[id as usize].links[layer] = selected.iter().map(|c| c.id).collect();
            for c in &selected {
                self.connect(c.id, id, layer);
            }
            entry_points = found;
        }

        if level > self.max_level {
            self.max_level = level;
            self.entry = Some(id);
        }
        id
    }

    /// Adds `new` to `node`'s list on `layer`, pruning with the selection
    /// heuristic when the list overflows.
    fn connect(&mut self, node: u32, new: u32, layer: usize) {
        let cap = self.max_links(layer);
        let links = &mut self.nodes[node as usize].links[layer];
        if links.contains(&new) {
            return;
        }
        links.push(new);
        if links.len() <= cap {
            return;
        }
        let base = self.nodes[node as usize].vector.clone();
        let mut candidates: Vec<Candidate<F>> = self.nodes[node as usize].links[layer]
            .iter()
            .map(|&n| Candidate {
                dist: self.distance(&base, n),
                id: n,
            })
            .collect();
        candidates.sort();
        let kept = self.select_neighbors(&candidates, cap);
        self.nodes[node as usize].links[layer] = kept.iter().map(|c| c.id).collect();
    }

    /// Neighbor selection heuristic: walk candidates nearest-first and keep
    /// one only if it is closer to the base than to every neighbor already
    /// kept. Pruned candidates back-fill up to `m` so sparse regions stay
    /// connected. `sorted` must be ascending by distance.
    fn select_neighbors(&self, sorted: &[Candidate<F>], m: usize) -> Vec<Candidate<F>> {
        let mut kept: Vec<Candidate<F>> = Vec::with_capacity(m);
        let mut pruned = Vec::new();
        for c in sorted {
            if kept.len() >= m {
                break;
            }
            let cv = &self.nodes[c.id as usize].vector;
            let diverse = kept
                .iter()
                .all(|k| F::one() - dot(cv, &self.nodes[k.id as usize].vector) > c.dist);
            if diverse {
                kept.push(*c);
            } else {
                pruned.push(*c);
            }
        }
        for c in pruned {
            if kept.len() >= m {
                break;
            }
            kept.push(c);
        }
        kept
    }

    fn greedy_closest(&self, query: &[F], mut best: Candidate<F>, layer: usize) -> Candidate<F> {
        loop {
            let mut improved = false;
            for &n in &self.nodes[best.id as usize].links[layer] {
                let d = self.distance(query, n);
                let c = Candidate { dist: d, id: n };
                if c < best {
                    best = c;
                    improved = true;
                }
            }
            if !improved {
                return best;
            }
        }
    }

    /// Beam search on one layer. Returns up to `ef` candidates ascending by
    /// distance; tombstoned nodes are included.
    fn search_layer(
        &self,
        query: &[F],
        entry_points: &[Candidate<F>],
        ef: usize,
        layer: usize,
    ) -> Vec<Candidate<F>> {
        let mut visited = vec![false; self.nodes.len()];
        let mut frontier: BinaryHeap<std::cmp::Reverse<Candidate<F>>> = BinaryHeap::new();
        let mut results: BinaryHeap<Candidate<F>> = BinaryHeap::new();
        for ep in entry_points {
            if !visited[ep.id as usize] {
                visited[ep.id as usize] = true;
                frontier.push(std::cmp::Reverse(*ep));
                results.push(*ep);
            }
        }
        while results.len() > ef {
            results.pop();
        }

        while let Some(std::cmp::Reverse(current)) = frontier.pop() {
            if let Some(worst) = results.peek() {
                if current.dist > worst.dist && results.len() >= ef {
                    break;
                }
            }
            let node = &self.nodes[current.id as usize];
            if layer >= node.links.len() {
                continue;
            }
            for &n in &node.links[layer] {
                if visited[n as usize] {
                    continue;
                }
                visited[n as usize] = true;
                let c = Candidate {
                    dist: self.distance(query, n),
                    id: n,
                };
                let admit = results.len() < ef || results.peek().is_some_and(|w| c < *w);
                if admit {
                    frontier.push(std::cmp::Reverse(c));
                    results.push(c);
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        results.into_sorted_vec()
    }

    /// Approximate nearest live nodes to a unit `query`: `(node id, cosine)`,
    /// best first, at most `k` long. The beam width is `max(ef, k)`.
    pub fn search(&self, query: &[F], k: usize, ef: usize) -> Vec<(u32, F)> {
        let Some(entry) = self.entry else {
            return Vec::new();
        };
        if k == 0 {
            return Vec::new();
        }
        let mut ep = Candidate {
            dist: self.distance(query, entry),
            id: entry,
        };
        for layer in (1..=self.max_level).rev() {
            ep = self.greedy_closest(query, ep, layer);
        }
        let ef = ef.max(k);
        let found = self.search_layer(query, &[ep], ef, 0);
        found
            .into_iter()
            .filter(|c| !self.nodes[c.id as usize].deleted)
            .take(k)
            // rescored directly: 1 - dist loses the low bits of the cosine
            .map(|c| (c.id, dot(query, &self.nodes[c.id as usize].vector)))
            .collect()
    }

    pub(crate) fn from_parts(
        params: HnswParams,
        nodes: Vec<Node<F>>,
        entry: Option<u32>,
        max_level: usize,
    ) -> Self {
        Self {
            params,
            nodes,
            entry,
            max_level,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    fn params() -> HnswParams {
        HnswParams {
            m: 16,
            ef_construction: 200,
            ef_search: 64,
            seed: 1,
        }
    }

    fn brute(vectors: &[Vec<f64>], q: &[f64], k: usize) -> Vec<u32> {
        let mut all: Vec<(f64, u32)> = vectors
            .iter()
            .enumerate()
            .map(|(i, v)| (1.0 - dot(q, v), i as u32))
            .collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        all.into_iter().take(k).map(|(_, i)| i).collect()
    }

    #[test]
    fn empty_graph_returns_nothing() {
        let g: HnswGraph<f32> = HnswGraph::new(params());
        assert!(g.search(&[1.0, 0.0], 3, 10).is_empty());
    }

    #[test]
    fn self_query_ranks_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = HnswGraph::new(params());
        let vs: Vec<Vec<f64>> = (0..300).map(|_| unit(&mut rng, 16)).collect();
        for v in &vs {
            g.insert(v.clone());
        }
        for (i, v) in vs.iter().enumerate().step_by(17) {
            let hits = g.search(v, 1, 64);
            assert_eq!(hits[0].0, i as u32);
            assert!((hits[0].1 - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn degree_bounds_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut g = HnswGraph::new(HnswParams { m: 4, ..params() });
        for _ in 0..500 {
            g.insert(unit(&mut rng, 8));
        }
        for node in &g.nodes {
            for (layer, links) in node.links.iter().enumerate() {
                assert!(links.len() <= g.max_links(layer));
                assert!(links.iter().all(|&n| g.nodes[n as usize].level() >= layer));
            }
        }
    }

    #[test]
    fn recall_on_small_random_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let vs: Vec<Vec<f64>> = (0..1000).map(|_| unit(&mut rng, 32)).collect();
        let mut g = HnswGraph::new(params());
        for v in &vs {
            g.insert(v.clone());
        }
        let mut hit = 0;
        for _ in 0..100 {
            let q = unit(&mut rng, 32);
            let truth = brute(&vs, &q, 10);
            let got: Vec<u32> = g.search(&q, 10, 64).into_iter().map(|(i, _)| i).collect();
            hit += truth.iter().filter(|t| got.contains(t)).count();
        }
        let recall = hit as f64 / 1000.0;
        assert!(recall >= 0.99, "recall {recall}");
    }

    #[test]
    fn tombstones_are_skipped() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut g = HnswGraph::new(params());
        let vs: Vec<Vec<f64>> = (0..50).map(|_| unit(&mut rng, 8)).collect();
        for v in &vs {
            g.insert(v.clone());
        }
        g.mark_deleted(7);
        let hits = g.search(&vs[7], 50, 64);
        assert!(hits.iter().all(|(i, _)| *i != 7));
        assert_eq!(hits.len(), 49);
    }
}
