use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{Entity, EntityId, KnowledgeGraph, Relation};
use crate::error::{Error, Result};

/// An ordered node/edge walk between two entities plus its source documents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievedPath {
    pub nodes: Vec<Entity>,
    pub edges: Vec<Relation>,
    /// Edge provenance documents, deduplicated in first-appearance order.
    pub sources: Vec<String>,
}

impl RetrievedPath {
    pub fn from_parts(nodes: Vec<Entity>, edges: Vec<Relation>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidInput("path needs at least one node".into()));
        }
        if edges.len() + 1 != nodes.len() {
            return Err(Error::InvalidInput(format!(
                "path with {} nodes must have {} edges, got {}",
                nodes.len(),
                nodes.len() - 1,
                edges.len()
            )));
        }
        for (i, edge) in edges.iter().enumerate() {
            if edge.other_end(nodes[i].id) != Some(nodes[i + 1].id) {
                return Err(Error::InvalidInput(format!(
                    "edge {i} does not join nodes {i} and {}",
                    i + 1
                )));
            }
        }
        let mut sources: Vec<String> = Vec::new();
        for edge in &edges {
            if !sources.contains(&edge.provenance.document_id) {
                sources.push(edge.provenance.document_id.clone());
            }
        }
        Ok(Self { nodes, edges, sources })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_ids(&self) -> Vec<EntityId> {
        self.nodes.iter().map(|n| n.id).collect()
    }

    /// True when `edges[i]` points from `nodes[i]` to `nodes[i + 1]`.
    pub fn edge_is_forward(&self, i: usize) -> bool {
        self.edges[i].head == self.nodes[i].id
    }

    /// Head and tail names of edge `i` in stored direction.
    pub fn edge_endpoints(&self, i: usize) -> (&str, &str) {
        let (a, b) = (&self.nodes[i].name, &self.nodes[i + 1].name);
        if self.edge_is_forward(i) {
            (a, b)
        } else {
            (b, a)
        }
    }
}

impl KnowledgeGraph {
    /// Minimum-hop path on the undirected view.
    ///
    /// Among equal-length paths the lexicographically smallest entity-id
    /// sequence wins; between parallel relations the smallest relation id.
    /// Returns `Ok(None)` when the endpoints are disconnected.
    pub fn shortest_path(&self, src: EntityId, dst: EntityId) -> Result<Option<RetrievedPath>> {
        self.entity(src)?;
        self.entity(dst)?;

        if src == dst {
            return RetrievedPath::from_parts(vec![self.entities[src.index()].clone()], vec![]).map(Some);
        }

        // BFS from dst gives distance-to-target; stop once src is labelled,
        // since every node nearer to dst than src is then settled.
        let mut dist = vec![u32::MAX; self.entities.len()];
        dist[dst.index()] = 0;
        let mut queue = VecDeque::from([dst]);
        'bfs: while let Some(v) = queue.pop_front() {
            for (w, _) in self.undirected_neighbors(v) {
                if dist[w.index()] == u32::MAX {
                    dist[w.index()] = dist[v.index()] + 1;
                    if w == src {
                        break 'bfs;
                    }
                    queue.push_back(w);
                }
            }
        }
        if dist[src.index()] == u32::MAX {
            return Ok(None);
        }

        // Greedy walk: the smallest neighbour one step closer keeps the
        // sequence lexicographically minimal and always completes.
        let mut nodes = vec![self.entities[src.index()].clone()];
        let mut edges = Vec::with_capacity(dist[src.index()] as usize);
        let mut cur = src;
        while cur != dst {
            let want = dist[cur.index()] - 1;
            let (next, rel) = self
                .undirected_neighbors(cur)
                .filter(|(w, _)| dist[w.index()] == want)
                .min()
                .expect("a node on a shortest path has a closer neighbour");
            nodes.push(self.entities[next.index()].clone());
            edges.push(self.relations[rel.index()].clone());
            cur = next;
        }
        RetrievedPath::from_parts(nodes, edges).map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg_store::{Provenance, SemanticLabel, Triplet};

    fn graph(edges: &[(&str, &str, &str)]) -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new();
        for (i, (h, p, t)) in edges.iter().enumerate() {
            g.add_triplet(&Triplet::new(
                *h,
                SemanticLabel::Unknown,
                *p,
                *t,
                SemanticLabel::Unknown,
                Provenance::new(format!("doc{i}"), 0),
            ))
            .unwrap();
        }
        g
    }

    fn names(p: &RetrievedPath) -> Vec<&str> {
        p.nodes.iter().map(|n| n.name.as_str()).collect()
    }

    #[test]
    fn traverses_against_edge_direction() {
        let g = graph(&[
            ("pulmonary hypoplasia", "IS RISK FACTOR FOR", "pphn"),
            ("pphn", "HAS RISK FACTOR", "oligohydramnios"),
        ]);
        let a = g.find_entity("oligohydramnios").unwrap();
        let b = g.find_entity("pulmonary hypoplasia").unwrap();
        let p = g.shortest_path(a, b).unwrap().unwrap();
        assert_eq!(names(&p), ["oligohydramnios", "pphn", "pulmonary hypoplasia"]);
        assert!(!p.edge_is_forward(0));
        assert_eq!(p.edge_endpoints(0), ("pphn", "oligohydramnios"));
        assert_eq!(p.sources, ["doc1", "doc0"]);
    }

    #[test]
    fn identity_path_has_one_node() {
        let g = graph(&[("a", "R", "b")]);
        let a = g.find_entity("a").unwrap();
        let p = g.shortest_path(a, a).unwrap().unwrap();
        assert_eq!(names(&p), ["a"]);
        assert!(p.edges.is_empty() && p.sources.is_empty());
    }

    #[test]
    fn disconnected_is_none() {
        let g = graph(&[("a", "R", "b"), ("c", "R", "d")]);
        let a = g.find_entity("a").unwrap();
        let c = g.find_entity("c").unwrap();
        assert!(g.shortest_path(a, c).unwrap().is_none());
    }

    #[test]
    fn unknown_entity() {
        let g = graph(&[("a", "R", "b")]);
        assert!(matches!(
            g.shortest_path(EntityId(0), EntityId(7)),
            Err(Error::UnknownEntity(7))
        ));
    }

    #[test]
    fn tie_break_is_smallest_id_sequence() {
        // s=0, x=1, y=2, t=3 ; two routes s-y-t and s-x-t, x has the smaller id
        let g = graph(&[("s", "R", "x"), ("s", "R", "y"), ("y", "R", "t"), ("x", "R", "t")]);
        let s = g.find_entity("s").unwrap();
        let t = g.find_entity("t").unwrap();
        let p = g.shortest_path(s, t).unwrap().unwrap();
        assert_eq!(names(&p), ["s", "x", "t"]);
        assert_eq!(p, g.shortest_path(s, t).unwrap().unwrap());
    }

    #[test]
    fn parallel_edges_pick_smallest_relation() {
        let g = graph(&[("a", "R1", "b"), ("b", "R2", "a")]);
        let a = g.find_entity("a").unwrap();
        let b = g.find_entity("b").unwrap();
        let p = g.shortest_path(a, b).unwrap().unwrap();
        assert_eq!(p.edges[0].predicate, "R1");
    }

    #[test]
    fn from_parts_checks_adjacency() {
        let g = graph(&[("a", "R", "b"), ("c", "R", "d")]);
        let nodes = vec![g.entities()[0].clone(), g.entities()[2].clone()];
        let edges = vec![g.relations()[0].clone()];
        assert!(RetrievedPath::from_parts(nodes, edges).is_err());
    }
}
