//! Edge betweenness on the undirected simple view (Brandes accumulation).
//!
//! Parallel relations between the same endpoint pair collapse to one simple
//! edge for path counting; that edge's score is then split equally among
//! the relations it stands for.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{KnowledgeGraph, RelationId};

#[derive(Debug, Clone, PartialEq)]
pub struct BetweennessOptions {
    /// Above this node count sampling may kick in.
    pub sample_threshold: usize,
    /// Number of sampled sources; `None` keeps the exact computation.
    pub sample_sources: Option<usize>,
    pub seed: u64,
}

impl Default for BetweennessOptions {
    fn default() -> Self {
        Self {
            sample_threshold: 100_000,
            sample_sources: None,
            seed: 0,
        }
    }
}

/// Compressed undirected simple graph.
struct SimpleView {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    edge_of: Vec<usize>,
    /// Relations represented by each simple edge.
    members: Vec<Vec<RelationId>>,
}

impl SimpleView {
    fn build(g: &KnowledgeGraph) -> Self {
        let n = g.node_count();
        let mut index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut members: Vec<Vec<RelationId>> = Vec::new();
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for rel in g.relations() {
            let (a, b) = (rel.head.index(), rel.tail.index());
            let key = (a.min(b), a.max(b));
            let e = *index.entry(key).or_insert_with(|| {
                pairs.push(key);
                members.push(Vec::new());
                pairs.len() - 1
            });
            members[e].push(rel.id);
        }

        let mut degree = vec![0usize; n];
        for &(a, b) in &pairs {
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for v in 0..n {
            offsets[v + 1] = offsets[v] + degree[v];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0usize; offsets[n]];
        let mut edge_of = vec![0usize; offsets[n]];
        for (e, &(a, b)) in pairs.iter().enumerate() {
            targets[fill[a]] = b;
            edge_of[fill[a]] = e;
            fill[a] += 1;
            targets[fill[b]] = a;
            edge_of[fill[b]] = e;
            fill[b] += 1;
        }
        Self {
            offsets,
            targets,
            edge_of,
            members,
        }
    }

    fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Dependency contributions of one BFS source, added into `acc`.
    fn accumulate_source(&self, s: usize, scratch: &mut Scratch, acc: &mut [f64]) {
        let n = self.node_count();
        scratch.reset(n);
        let Scratch {
            dist,
            sigma,
            delta,
            order,
            queue,
        } = scratch;

        dist[s] = 0;
        sigma[s] = 1.0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for k in self.offsets[v]..self.offsets[v + 1] {
                let w = self.targets[k];
                if dist[w] < 0 {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                }
            }
        }
        // Predecessors of w are neighbours one level closer to s.
        for &w in order.iter().rev() {
            for k in self.offsets[w]..self.offsets[w + 1] {
                let v = self.targets[k];
                if dist[v] >= 0 && dist[v] + 1 == dist[w] {
                    let c = sigma[v] / sigma[w] * (1.0 + delta[w]);
                    acc[self.edge_of[k]] += c;
                    delta[v] += c;
                }
            }
        }
    }
}

#[derive(Default)]
struct Scratch {
    dist: Vec<i64>,
    sigma: Vec<f64>,
    delta: Vec<f64>,
    order: Vec<usize>,
    queue: VecDeque<usize>,
}

impl Scratch {
    fn reset(&mut self, n: usize) {
        self.dist.clear();
        self.dist.resize(n, -1);
        self.sigma.clear();
        self.sigma.resize(n, 0.0);
        self.delta.clear();
        self.delta.resize(n, 0.0);
        self.order.clear();
        self.queue.clear();
    }
}

impl KnowledgeGraph {
    /// Exact edge betweenness indexed by relation id, cached until mutation.
    ///
    /// Counts each unordered node pair once.
    pub fn edge_betweenness(&self) -> Arc<Vec<f64>> {
        Arc::clone(
            self.betweenness
                .get_or_init(|| Arc::new(self.compute_betweenness(&BetweennessOptions::default()))),
        )
    }

    /// Uncached computation honouring sampling options.
    pub fn edge_betweenness_with(&self, opts: &BetweennessOptions) -> Vec<f64> {
        self.compute_betweenness(opts)
    }

    fn compute_betweenness(&self, opts: &BetweennessOptions) -> Vec<f64> {
        let view = SimpleView::build(self);
        let n = view.node_count();
        let simple_edges = view.members.len();

        let sources: Vec<usize> = match opts.sample_sources {
            Some(k) if n > opts.sample_threshold && k < n => {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                let mut picked = sample(&mut rng, n, k).into_vec();
                picked.sort_unstable();
                picked
            }
            _ => (0..n).collect(),
        };
        let scale = if sources.len() == n || sources.is_empty() {
            1.0
        } else {
            n as f64 / sources.len() as f64
        };

        // Fixed source blocks summed in block order keep the floating-point
        // result independent of thread scheduling.
        let partials: Vec<Vec<f64>> = sources
            .par_chunks(64)
            .map(|block| {
                let mut scratch = Scratch::default();
                let mut acc = vec![0.0f64; simple_edges];
                for &s in block {
                    view.accumulate_source(s, &mut scratch, &mut acc);
                }
                acc
            })
            .collect();
        let mut simple = vec![0.0f64; simple_edges];
        for acc in partials {
            simple.iter_mut().zip(acc).for_each(|(x, y)| *x += y);
        }

        // Each unordered pair was seen from both ends.
        let mut out = vec![0.0f64; self.edge_count()];
        for (e, rels) in view.members.iter().enumerate() {
            let share = simple[e] * scale / 2.0 / rels.len() as f64;
            for r in rels {
                out[r.index()] = share;
            }
        }
        out
    }
}
