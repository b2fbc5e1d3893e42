//! Well-foundedness and extensionality checks for finite relations, and the
//! Mostowski collapse onto a transitive hereditarily finite set.
//!
//! Edges are oriented `u E v` meaning "u is a member of v". For finite graphs
//! the requirement that every predecessor class is a set holds trivially, so
//! well-foundedness reduces to acyclicity.

use std::collections::{BTreeSet, HashMap};
use std::fmt::{self, Write as _};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kernel::{HfSet, SetStore};

/// A finite binary relation on the nodes `0..node_count`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Digraph {
    node_count: usize,
    edges: BTreeSet<(usize, usize)>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("edge ({0},{1}) has an endpoint outside 0..{2}")]
    EndpointOutOfRange(usize, usize, usize),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

impl Digraph {
    pub fn new(node_count: usize) -> Self {
        Digraph {
            node_count,
            edges: BTreeSet::new(),
        }
    }

    /// Builds a graph, rejecting out-of-range endpoints. Duplicate edges merge.
    pub fn from_edges<I>(node_count: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Digraph::new(node_count);
        for (u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, u: usize, v: usize) -> Result<bool, GraphError> {
        if u >= self.node_count || v >= self.node_count {
            return Err(GraphError::EndpointOutOfRange(u, v, self.node_count));
        }
        Ok(self.edges.insert((u, v)))
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&(u, v))
    }

    /// `preds[v]` lists every `u` with `u E v`, ascending.
    pub fn predecessors(&self) -> Vec<Vec<usize>> {
        let mut preds = vec![Vec::new(); self.node_count];
        for &(u, v) in &self.edges {
            preds[v].push(u);
        }
        preds
    }

    fn successors(&self) -> Vec<Vec<usize>> {
        let mut succs = vec![Vec::new(); self.node_count];
        for &(u, v) in &self.edges {
            succs[u].push(v);
        }
        succs
    }

    /// Reads the edge-list format: a `nodes N` header, then one `u v` pair
    /// per line. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let mut graph: Option<Digraph> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = |message: &str| GraphError::Format {
                line: line_no,
                message: message.to_string(),
            };
            match (&mut graph, fields.as_slice()) {
                (None, ["nodes", n]) => {
                    let n = n.parse().map_err(|_| bad("node count is not a number"))?;
                    graph = Some(Digraph::new(n));
                }
                (None, _) => return Err(bad("expected header `nodes N`")),
                (Some(_), ["nodes", _]) => return Err(bad("duplicate `nodes` header")),
                (Some(g), [u, v]) => {
                    let u = u.parse().map_err(|_| bad("node id is not a number"))?;
                    let v = v.parse().map_err(|_| bad("node id is not a number"))?;
                    g.add_edge(u, v).map_err(|e| bad(&e.to_string()))?;
                }
                (Some(_), _) => return Err(bad("expected `u v`")),
            }
        }
        graph.ok_or(GraphError::Format {
            line: 0,
            message: "missing `nodes N` header".into(),
        })
    }
}

/// Canonical edge-list text: header, then edges in ascending order.
impl fmt::Display for Digraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "nodes {}", self.node_count)?;
        for (u, v) in &self.edges {
            writeln!(f, "{u} {v}")?;
        }
        Ok(())
    }
}

/// Evidence that a relation is not well-founded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CycleWitness {
    /// Nodes left after repeatedly deleting E-minimal nodes; none of them is
    /// E-minimal within this set.
    pub residual: Vec<usize>,
    /// A closed walk `c0 E c1 E ... E ck E c0` inside the residual.
    pub cycle: Vec<usize>,
}

impl CycleWitness {
    /// Re-checks the witness against the graph from scratch.
    pub fn verify(&self, g: &Digraph) -> bool {
        if self.residual.is_empty() || self.cycle.is_empty() {
            return false;
        }
        let inside: BTreeSet<usize> = self.residual.iter().copied().collect();
        let no_minimal = inside
            .iter()
            .all(|&v| inside.iter().any(|&u| g.has_edge(u, v)));
        let closed = self
            .cycle
            .iter()
            .zip(self.cycle.iter().cycle().skip(1))
            .all(|(&u, &v)| g.has_edge(u, v));
        no_minimal && closed && self.cycle.iter().all(|c| inside.contains(c))
    }
}

/// Two distinct nodes with identical predecessor sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExtensionalityWitness {
    pub x: usize,
    pub y: usize,
}

impl ExtensionalityWitness {
    pub fn verify(&self, g: &Digraph) -> bool {
        let preds = g.predecessors();
        self.x != self.y
            && self.x < g.node_count()
            && self.y < g.node_count()
            && preds[self.x] == preds[self.y]
    }
}

/// Iteratively strips E-minimal nodes. Returns the removal order when the
/// whole graph is consumed, otherwise the stuck residual with a cycle in it.
pub fn check_well_founded(g: &Digraph) -> Result<Vec<usize>, CycleWitness> {
    let n = g.node_count();
    let succs = g.successors();
    let mut indegree = vec![0usize; n];
    for (_, v) in g.edges() {
        indegree[v] += 1;
    }
    let mut ready: Vec<usize> = (0..n).rev().filter(|&v| indegree[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(u) = ready.pop() {
        order.push(u);
        for &v in succs[u].iter().rev() {
            indegree[v] -= 1;
            if indegree[v] == 0 {
                ready.push(v);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    let residual: Vec<usize> = (0..n).filter(|&v| indegree[v] > 0).collect();
    Err(CycleWitness {
        cycle: cycle_in_residual(g, &indegree, residual[0]),
        residual,
    })
}

/// Every residual node has a residual predecessor, so walking predecessors
/// from any residual node must revisit a node.
fn cycle_in_residual(g: &Digraph, indegree: &[usize], start: usize) -> Vec<usize> {
    let preds = g.predecessors();
    let mut position = HashMap::new();
    let mut walk = Vec::new();
    let mut v = start;
    loop {
        if let Some(&i) = position.get(&v) {
            // walk[i..] runs backwards along E; reverse it into a forward cycle.
            let mut cycle: Vec<usize> = walk[i..].to_vec();
            cycle.reverse();
            return cycle;
        }
        position.insert(v, walk.len());
        walk.push(v);
        v = *preds[v]
            .iter()
            .find(|&&u| indegree[u] > 0)
            .expect("residual nodes keep a residual predecessor");
    }
}

/// Returns the pair `(x, y)`, `x < y`, with the smallest `y` whose predecessor
/// set was already seen.
pub fn check_extensional(g: &Digraph) -> Result<(), ExtensionalityWitness> {
    let mut first_with: HashMap<Vec<usize>, usize> = HashMap::new();
    for (y, preds) in g.predecessors().into_iter().enumerate() {
        if let Some(&x) = first_with.get(&preds) {
            return Err(ExtensionalityWitness { x, y });
        }
        first_with.insert(preds, y);
    }
    Ok(())
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CollapseError {
    #[error("relation is not well-founded: cycle {:?}", .0.cycle)]
    NotWellFounded(CycleWitness),
    #[error("relation is not extensional: nodes {} and {} have the same predecessors", .0.x, .0.y)]
    NotExtensional(ExtensionalityWitness),
    #[error("input set is not transitive; apply transitive_closure first")]
    NotTransitive,
}

/// The collapsing isomorphism and its transitive image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CollapseResult {
    pub pi: Vec<HfSet>,
    pub image: HfSet,
}

/// Computes `pi(x) = { pi(z) : z E x }` along a topological order.
pub fn mostowski_collapse(
    store: &mut SetStore,
    g: &Digraph,
) -> Result<CollapseResult, CollapseError> {
    let order = check_well_founded(g).map_err(CollapseError::NotWellFounded)?;
    check_extensional(g).map_err(CollapseError::NotExtensional)?;
    let preds = g.predecessors();
    let mut pi: Vec<Option<HfSet>> = vec![None; g.node_count()];
    for &x in &order {
        let members: Vec<HfSet> = preds[x]
            .iter()
            .map(|&z| pi[z].expect("predecessors precede in topological order"))
            .collect();
        pi[x] = Some(store.make_set(members));
    }
    let pi: Vec<HfSet> = pi.into_iter().map(|p| p.expect("all nodes ordered")).collect();
    let image = store.make_set(pi.iter().copied());
    Ok(CollapseResult { pi, image })
}

/// A transitive set presented as a graph on `0..|s|`, together with the
/// labelling `f: node -> member`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Encoding {
    pub graph: Digraph,
    pub labels: Vec<HfSet>,
}

/// Encodes transitive `s` through a seeded uniformly random bijection.
pub fn encode_as_graph(
    store: &SetStore,
    s: HfSet,
    seed: u64,
) -> Result<Encoding, CollapseError> {
    if !store.is_transitive(s) {
        return Err(CollapseError::NotTransitive);
    }
    let mut labels = store.members(s).to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    labels.shuffle(&mut rng);
    let node_of: HashMap<HfSet, usize> =
        labels.iter().enumerate().map(|(i, m)| (*m, i)).collect();
    let mut graph = Digraph::new(labels.len());
    for (v, label) in labels.iter().enumerate() {
        for member in store.members(*label) {
            graph.edges.insert((node_of[member], v));
        }
    }
    Ok(Encoding { graph, labels })
}

/// Human-readable `node -> set` table followed by the image.
pub fn render_collapse(store: &SetStore, result: &CollapseResult) -> String {
    let mut out = String::new();
    for (node, set) in result.pi.iter().enumerate() {
        let _ = writeln!(out, "{node}\t{}", store.display(*set));
    }
    let _ = writeln!(out, "image\t{}", store.display(result.image));
    out
}
