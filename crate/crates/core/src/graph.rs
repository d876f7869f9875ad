//! Homogeneous message graph: messages are linked when they share a user,
//! a hashtag or an entity.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::ingest::MessageRecord;

/// Which message fields induce edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkPolicy {
    /// Count mentioned users as shared users alongside the author.
    pub mentions: bool,
}

impl Default for LinkPolicy {
    fn default() -> Self {
        Self { mentions: true }
    }
}

/// Node ids, initial features and an undirected adjacency without self
/// loops. Neighbour lists are sorted and duplicate free.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageGraph {
    pub node_ids: Vec<String>,
    pub features: Array2<f64>,
    adjacency: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeStats {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
    pub isolated: usize,
}

fn normalize(s: &str) -> String {
    s.trim().to_lowercase()
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
enum Element {
    User(String),
    Hashtag(String),
    Entity(String),
}

fn elements(r: &MessageRecord, policy: LinkPolicy) -> BTreeSet<Element> {
    let mut out = BTreeSet::new();
    let mut push_user = |u: &str| {
        let u = normalize(u);
        if !u.is_empty() {
            out.insert(Element::User(u));
        }
    };
    push_user(&r.author);
    if policy.mentions {
        for u in &r.mentioned_users {
            push_user(u);
        }
    }
    for h in &r.hashtags {
        let h = normalize(h);
        if !h.is_empty() {
            out.insert(Element::Hashtag(h));
        }
    }
    for e in &r.entities {
        let e = normalize(e);
        if !e.is_empty() {
            out.insert(Element::Entity(e));
        }
    }
    out
}

impl MessageGraph {
    /// Builds the graph through an inverted index (element -> messages),
    /// expanding each posting list into a clique.
    pub fn build(block: &[MessageRecord], features: Array2<f64>) -> Result<Self> {
        Self::build_with(block, features, LinkPolicy::default())
    }

    pub fn build_with(
        block: &[MessageRecord],
        features: Array2<f64>,
        policy: LinkPolicy,
    ) -> Result<Self> {
        if features.nrows() != block.len() {
            return Err(Error::Dimension {
                expected: block.len(),
                actual: features.nrows(),
                context: "feature rows vs block size",
            });
        }
        let mut postings: BTreeMap<Element, Vec<usize>> = BTreeMap::new();
        for (i, r) in block.iter().enumerate() {
            for e in elements(r, policy) {
                postings.entry(e).or_default().push(i);
            }
        }
        let mut sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); block.len()];
        for members in postings.values() {
            for (a, &i) in members.iter().enumerate() {
                for &j in &members[a + 1..] {
                    sets[i].insert(j);
                    sets[j].insert(i);
                }
            }
        }
        Ok(Self {
            node_ids: block.iter().map(|r| r.id.clone()).collect(),
            features,
            adjacency: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    /// Builds a graph directly from an edge list. Self loops and duplicates
    /// are dropped.
    pub fn from_edges(
        node_ids: Vec<String>,
        features: Array2<f64>,
        edges: &[(usize, usize)],
    ) -> Result<Self> {
        let n = node_ids.len();
        if features.nrows() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: features.nrows(),
                context: "feature rows vs node count",
            });
        }
        let mut sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!("edge ({i}, {j}) out of range")));
            }
            if i != j {
                sets[i].insert(j);
                sets[j].insert(i);
            }
        }
        Ok(Self {
            node_ids,
            features,
            adjacency: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Undirected edges with `i < j`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, ns)| ns.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    pub fn degree_stats(&self) -> DegreeStats {
        if self.is_empty() {
            return DegreeStats {
                min: 0,
                max: 0,
                mean: 0.0,
                isolated: 0,
            };
        }
        let degrees: Vec<usize> = self.adjacency.iter().map(Vec::len).collect();
        DegreeStats {
            min: *degrees.iter().min().expect("non-empty"),
            max: *degrees.iter().max().expect("non-empty"),
            mean: degrees.iter().sum::<usize>() as f64 / degrees.len() as f64,
            isolated: degrees.iter().filter(|&&d| d == 0).count(),
        }
    }

    /// Tab separated `id_i id_j` lines, one per undirected edge.
    pub fn write_edge_list<W: Write>(&self, mut sink: W) -> std::io::Result<()> {
        for (i, j) in self.edges() {
            writeln!(sink, "{}\t{}", self.node_ids[i], self.node_ids[j])?;
        }
        Ok(())
    }

    /// Induced subgraph over `nodes` (in the given order).
    pub fn subgraph(&self, nodes: &[usize]) -> Self {
        let mut position = vec![usize::MAX; self.len()];
        for (p, &i) in nodes.iter().enumerate() {
            position[i] = p;
        }
        let adjacency = nodes
            .iter()
            .map(|&i| {
                let mut ns: Vec<usize> = self.adjacency[i]
                    .iter()
                    .filter_map(|&j| (position[j] != usize::MAX).then_some(position[j]))
                    .collect();
                ns.sort_unstable();
                ns
            })
            .collect();
        Self {
            node_ids: nodes.iter().map(|&i| self.node_ids[i].clone()).collect(),
            features: self.features.select(ndarray::Axis(0), nodes),
            adjacency,
        }
    }
}
