//! DAG sampling and ordering for SCMs.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mechanism::{Activation, ActivationKind, Mechanism, MechanismKind};
use super::{GraphAlgorithm, NoiseFamily, PriorHyperparams, STREAM_GRAPH};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Noise {
    Gaussian { std: f64 },
    /// Uniform on `[-half_width, half_width]`.
    Uniform { half_width: f64 },
}

impl Noise {
    pub fn std(&self) -> f64 {
        match *self {
            Noise::Gaussian { std } => std,
            Noise::Uniform { half_width } => half_width / 3f64.sqrt(),
        }
    }

    pub fn zero() -> Noise {
        Noise::Gaussian { std: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub noise: Noise,
    /// `None` for root nodes, which emit noise only.
    pub mechanism: Option<Mechanism>,
    pub activation: Activation,
    /// Z-score the mechanism output before the activation.
    pub standardize: bool,
}

impl NodeSpec {
    pub fn root(noise: Noise) -> NodeSpec {
        NodeSpec { noise, mechanism: None, activation: Activation::Identity, standardize: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmGraph {
    pub n_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    pub nodes: Vec<NodeSpec>,
}

impl ScmGraph {
    pub fn new(n_nodes: usize, edges: Vec<(usize, usize)>, nodes: Vec<NodeSpec>) -> Result<ScmGraph> {
        if nodes.len() != n_nodes {
            return Err(Error::InvalidGraph(format!(
                "{} node specs for {n_nodes} nodes",
                nodes.len()
            )));
        }
        if let Some(&(a, b)) = edges.iter().find(|&&(a, b)| a >= n_nodes || b >= n_nodes || a == b) {
            return Err(Error::InvalidGraph(format!("bad edge ({a}, {b})")));
        }
        Ok(ScmGraph { n_nodes, edges, nodes })
    }

    /// Parents of `node`, ascending.
    pub fn parents(&self, node: usize) -> Vec<usize> {
        let mut p: Vec<usize> = self.edges.iter().filter(|e| e.1 == node).map(|e| e.0).collect();
        p.sort_unstable();
        p.dedup();
        p
    }

    pub fn is_root(&self, node: usize) -> bool {
        !self.edges.iter().any(|e| e.1 == node)
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.n_nodes).filter(|&i| self.is_root(i)).collect()
    }
}

/// Ordering in which every parent precedes its children. Ties go to the
/// smallest node index.
pub fn topological_order(graph: &ScmGraph) -> Result<Vec<usize>> {
    let n = graph.n_nodes;
    let mut indeg = vec![0usize; n];
    let mut children = vec![Vec::new(); n];
    for &(a, b) in &graph.edges {
        indeg[b] += 1;
        children[a].push(b);
    }
    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..n).filter(|&i| indeg[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(u)) = ready.pop() {
        order.push(u);
        for &c in &children[u] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                ready.push(Reverse(c));
            }
        }
    }
    if order.len() != n {
        return Err(Error::InvalidGraph("graph contains a directed cycle".into()));
    }
    Ok(order)
}

/// Three-colour depth-first search for a directed cycle.
pub fn dfs_is_acyclic(n_nodes: usize, edges: &[(usize, usize)]) -> bool {
    #[derive(Clone, Copy, PartialEq)]
    enum Colour {
        White,
        Grey,
        Black,
    }
    let mut adj = vec![Vec::new(); n_nodes];
    for &(a, b) in edges {
        adj[a].push(b);
    }
    let mut colour = vec![Colour::White; n_nodes];
    for start in 0..n_nodes {
        if colour[start] != Colour::White {
            continue;
        }
        // (node, next child index)
        let mut stack = vec![(start, 0usize)];
        colour[start] = Colour::Grey;
        while let Some(&mut (u, ref mut i)) = stack.last_mut() {
            if *i < adj[u].len() {
                let v = adj[u][*i];
                *i += 1;
                match colour[v] {
                    Colour::Grey => return false,
                    Colour::White => {
                        colour[v] = Colour::Grey;
                        stack.push((v, 0));
                    }
                    Colour::Black => {}
                }
            } else {
                colour[u] = Colour::Black;
                stack.pop();
            }
        }
    }
    true
}

/// Sample a DAG and per-node specs. Node indices are already topologically
/// sorted: every edge points from a lower to a higher index.
pub fn sample_dag(hp: &PriorHyperparams) -> Result<ScmGraph> {
    let n = hp.n_nodes;
    if n < 2 {
        return Err(Error::Config(format!("an SCM needs at least 2 nodes, got {n}")));
    }
    let mut rng = rng::stream(hp.seed, STREAM_GRAPH);
    let edges = match hp.graph_algorithm {
        GraphAlgorithm::RandomDag => {
            let p = hp.edge_prob.unwrap_or_else(|| rng.random_range(0.2..0.6));
            random_dag_edges(n, p, &mut rng)
        }
        GraphAlgorithm::ScaleFree => scale_free_edges(n, &mut rng),
        GraphAlgorithm::Layered => {
            let layers = hp.n_layers.unwrap_or_else(|| rng.random_range(2..=n.min(5)));
            layered_edges(&layer_sizes(n, layers)?, &mut rng)
        }
    };
    let mut graph = ScmGraph::new(n, edges, vec![NodeSpec::root(Noise::zero()); n])?;
    for i in 0..n {
        let n_parents = graph.parents(i).len();
        graph.nodes[i] = sample_node_spec(n_parents, hp.noise_family, &mut rng);
    }
    Ok(graph)
}

fn random_dag_edges<R: Rng>(n: usize, p: f64, rng: &mut R) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for j in 1..n {
        for i in 0..j {
            if rng.random_bool(p.clamp(0.0, 1.0)) {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Preferential attachment: node `j` picks 1..=3 parents among earlier nodes
/// with probability proportional to degree + 1.
fn scale_free_edges<R: Rng>(n: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let mut degree = vec![0usize; n];
    let mut edges = Vec::new();
    for j in 1..n {
        let m = rng.random_range(1..=j.min(3));
        let mut chosen: Vec<usize> = Vec::with_capacity(m);
        while chosen.len() < m {
            let total: usize = (0..j).filter(|i| !chosen.contains(i)).map(|i| degree[i] + 1).sum();
            let mut ticket = rng.random_range(0..total);
            for i in (0..j).filter(|i| !chosen.contains(i)) {
                let w = degree[i] + 1;
                if ticket < w {
                    chosen.push(i);
                    break;
                }
                ticket -= w;
            }
        }
        chosen.sort_unstable();
        for i in chosen {
            degree[i] += 1;
            degree[j] += 1;
            edges.push((i, j));
        }
    }
    edges
}

/// Near-equal layer sizes, larger layers first.
pub fn layer_sizes(n: usize, layers: usize) -> Result<Vec<usize>> {
    if layers == 0 || layers > n {
        return Err(Error::Config(format!("cannot split {n} nodes into {layers} layers")));
    }
    Ok((0..layers).map(|l| n / layers + usize::from(l < n % layers)).collect())
}

/// Nodes are numbered layer by layer. Each node takes parents from the
/// previous layer (at least one) plus occasional skip edges from older layers.
fn layered_edges<R: Rng>(sizes: &[usize], rng: &mut R) -> Vec<(usize, usize)> {
    let mut start = vec![0usize; sizes.len() + 1];
    for (l, s) in sizes.iter().enumerate() {
        start[l + 1] = start[l] + s;
    }
    let mut edges = Vec::new();
    for l in 1..sizes.len() {
        for child in start[l]..start[l + 1] {
            let prev: Vec<usize> = (start[l - 1]..start[l]).collect();
            let mut parents: Vec<usize> = prev.iter().copied().filter(|_| rng.random_bool(0.5)).collect();
            if parents.is_empty() {
                parents.push(*prev.choose(rng).expect("non-empty layer"));
            }
            for p in 0..start[l - 1] {
                if rng.random_bool(0.1) {
                    parents.push(p);
                }
            }
            parents.sort_unstable();
            edges.extend(parents.into_iter().map(|p| (p, child)));
        }
    }
    edges
}

fn sample_noise<R: Rng>(family: NoiseFamily, std: f64, rng: &mut R) -> Noise {
    let gaussian = match family {
        NoiseFamily::Gaussian => true,
        NoiseFamily::Uniform => false,
        NoiseFamily::Mixed => rng.random_bool(0.5),
    };
    if gaussian {
        Noise::Gaussian { std }
    } else {
        Noise::Uniform { half_width: std * 3f64.sqrt() }
    }
}

fn sample_node_spec<R: Rng>(n_parents: usize, family: NoiseFamily, rng: &mut R) -> NodeSpec {
    if n_parents == 0 {
        return NodeSpec::root(sample_noise(family, 1.0, rng));
    }
    let std = rng.random_range(0.01f64.ln()..0.3f64.ln()).exp();
    let noise = sample_noise(family, std, rng);
    let kind = *MechanismKind::ALL.choose(rng).expect("non-empty menu");
    let mechanism = Mechanism::sample(kind, n_parents, rng);
    let act_kind = match rng.random_range(0..20) {
        0..=4 => ActivationKind::Identity,
        5..=9 => ActivationKind::Tanh,
        10..=13 => ActivationKind::SoftRelu,
        _ => ActivationKind::Sinusoid,
    };
    let activation = Activation::sample(act_kind, rng);
    NodeSpec { noise, mechanism: Some(mechanism), activation, standardize: true }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::PriorHyperparams;

    fn bare(n: usize, edges: Vec<(usize, usize)>) -> ScmGraph {
        ScmGraph::new(n, edges, vec![NodeSpec::root(Noise::zero()); n]).unwrap()
    }

    #[test]
    fn forced_single_edge() {
        let mut hp = PriorHyperparams::preset("micro-reg").unwrap();
        hp.n_nodes = 2;
        hp.n_features = 1;
        hp.graph_algorithm = GraphAlgorithm::RandomDag;
        hp.edge_prob = Some(1.0);
        let g = sample_dag(&hp).unwrap();
        assert_eq!(g.edges, vec![(0, 1)]);
        hp.n_nodes = 1;
        assert!(matches!(sample_dag(&hp), Err(Error::Config(_))));
    }

    #[test]
    fn sampled_graphs_are_acyclic() {
        for algo in [GraphAlgorithm::RandomDag, GraphAlgorithm::ScaleFree, GraphAlgorithm::Layered] {
            for seed in 0..30 {
                let mut hp = PriorHyperparams::preset("small-cls").unwrap();
                hp.graph_algorithm = algo;
                hp.seed = seed;
                let g = sample_dag(&hp).unwrap();
                assert!(dfs_is_acyclic(g.n_nodes, &g.edges));
                assert!(g.edges.iter().all(|&(a, b)| a < b));
            }
        }
    }

    #[test]
    fn layered_has_no_intra_layer_edges() {
        let mut hp = PriorHyperparams::preset("micro-cls").unwrap();
        hp.n_nodes = 6;
        hp.n_features = 3;
        hp.graph_algorithm = GraphAlgorithm::Layered;
        hp.n_layers = Some(3);
        let layer_of = |i: usize| i / 2;
        for seed in 0..20 {
            hp.seed = seed;
            let g = sample_dag(&hp).unwrap();
            assert!(g.edges.iter().all(|&(a, b)| layer_of(a) < layer_of(b)));
        }
    }

    #[test]
    fn topo_examples() {
        assert_eq!(topological_order(&bare(3, vec![(0, 1), (1, 2)])).unwrap(), vec![0, 1, 2]);
        assert_eq!(topological_order(&bare(4, vec![])).unwrap(), vec![0, 1, 2, 3]);
        let diamond = bare(4, vec![(0, 1), (0, 2), (1, 3), (2, 3)]);
        let order = topological_order(&diamond).unwrap();
        assert_eq!(order, vec![0, 1, 2, 3]);
        let pos: Vec<usize> = (0..4).map(|n| order.iter().position(|&x| x == n).unwrap()).collect();
        assert!(diamond.edges.iter().all(|&(a, b)| pos[a] < pos[b]));
        // relabelled so index order is not topological
        let g = bare(3, vec![(2, 0), (0, 1)]);
        assert_eq!(topological_order(&g).unwrap(), vec![2, 0, 1]);
    }

    #[test]
    fn cycles_are_detected() {
        let g = bare(3, vec![(0, 1), (1, 2), (2, 0)]);
        assert!(matches!(topological_order(&g), Err(Error::InvalidGraph(_))));
        assert!(!dfs_is_acyclic(3, &g.edges));
        assert!(dfs_is_acyclic(3, &[(0, 1), (0, 2), (1, 2)]));
    }
}
