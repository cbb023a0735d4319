//! Feature/target selection and post-processing into a [`Dataset`].

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::graph::ScmGraph;
use super::{PriorHyperparams, STREAM_SELECT};
use crate::dataset::{ColumnKind, Dataset, Split, TaskKind};
use crate::error::{Error, Result};
use crate::rng;

/// Concentration of the Dirichlet that jitters class-bin widths.
pub const CLASS_WIDTH_ALPHA: f64 = 5.0;
/// Attempts at drawing class bins that leave every class in the train split.
pub const MAX_BIN_RETRIES: usize = 10;

/// Symmetric Dirichlet draw via normalized Gamma variates.
pub fn dirichlet<R: Rng>(k: usize, alpha: f64, rng: &mut R) -> Vec<f64> {
    let g = Gamma::new(alpha, 1.0).expect("positive alpha");
    let draws: Vec<f64> = (0..k).map(|_| g.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

/// Assign each value to a bin by rank. Bin `b` takes the rows whose rank
/// fraction `(rank + 0.5) / n` falls in `[cum[b-1], cum[b])`, where `cum` is
/// the running sum of `widths`. Ties are ranked by row index.
pub fn rank_bin(values: &[f64], widths: &[f64]) -> Vec<usize> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let total: f64 = widths.iter().sum();
    let mut cum = Vec::with_capacity(widths.len());
    let mut acc = 0.0;
    for w in widths {
        acc += w / total;
        cum.push(acc);
    }
    let last = widths.len() - 1;
    let mut out = vec![0usize; n];
    for (rank, &row) in idx.iter().enumerate() {
        let u = (rank as f64 + 0.5) / n as f64;
        out[row] = cum.iter().position(|&c| u < c).unwrap_or(last);
    }
    out
}

/// Which SCM nodes became features and target.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub feature_nodes: Vec<usize>,
    pub target_node: usize,
}

/// Target: uniform over non-root nodes (any node if all are roots).
/// Features: uniform without replacement over the remaining nodes.
pub fn select_nodes<R: Rng>(graph: &ScmGraph, n_features: usize, rng: &mut R) -> Result<Selection> {
    if n_features + 1 > graph.n_nodes {
        return Err(Error::Config(format!(
            "{} nodes cannot supply {n_features} features and a target",
            graph.n_nodes
        )));
    }
    let non_roots: Vec<usize> = (0..graph.n_nodes).filter(|&i| !graph.is_root(i)).collect();
    let pool = if non_roots.is_empty() { (0..graph.n_nodes).collect() } else { non_roots };
    let target_node = *pool.choose(rng).expect("non-empty pool");
    let mut rest: Vec<usize> = (0..graph.n_nodes).filter(|&i| i != target_node).collect();
    rest.shuffle(rng);
    rest.truncate(n_features);
    Ok(Selection { feature_nodes: rest, target_node })
}

/// Build the dataset from evaluated node values.
pub fn select_and_finalize(
    values: &[Vec<f64>],
    graph: &ScmGraph,
    hp: &PriorHyperparams,
    split: &[Split],
) -> Result<(Dataset, Selection)> {
    let mut rng = rng::stream(hp.seed, STREAM_SELECT);
    let sel = select_nodes(graph, hp.n_features, &mut rng)?;
    let target = &values[sel.target_node];

    let (y, task) = match hp.n_classes {
        None => (target.clone(), TaskKind::Regression),
        Some(k) => (classify_target(target, k, split, &mut rng)?, TaskKind::Classification { n_classes: k }),
    };

    let mut columns = Vec::with_capacity(hp.n_features);
    let mut col_kinds = Vec::with_capacity(hp.n_features);
    for &node in &sel.feature_nodes {
        let col = &values[node];
        if rng.random_bool(hp.categorical_fraction.clamp(0.0, 1.0)) {
            let card = rng.random_range(2..=10u32);
            let bins = rank_bin(col, &vec![1.0; card as usize]);
            let mut relabel: Vec<usize> = (0..card as usize).collect();
            relabel.shuffle(&mut rng);
            columns.push(bins.iter().map(|&b| relabel[b] as f64).collect());
            col_kinds.push(ColumnKind::Categorical { cardinality: card });
        } else {
            columns.push(col.clone());
            col_kinds.push(ColumnKind::Numeric);
        }
    }

    if hp.missing_rate > 0.0 {
        let p = hp.missing_rate.clamp(0.0, 1.0);
        for col in columns.iter_mut() {
            for v in col.iter_mut() {
                if rng.random_bool(p) {
                    *v = f64::NAN;
                }
            }
        }
    }

    let ds = Dataset { columns, col_kinds, y, split: split.to_vec(), task };
    ds.validate()?;
    Ok((ds, sel))
}

fn classify_target<R: Rng>(target: &[f64], k: usize, split: &[Split], rng: &mut R) -> Result<Vec<f64>> {
    for _ in 0..MAX_BIN_RETRIES {
        let widths = dirichlet(k, CLASS_WIDTH_ALPHA, rng);
        let bins = rank_bin(target, &widths);
        let mut seen = vec![false; k];
        for (b, s) in bins.iter().zip(split) {
            if *s == Split::Train {
                seen[*b] = true;
            }
        }
        if seen.iter().all(|&s| s) {
            let mut perm: Vec<usize> = (0..k).collect();
            perm.shuffle(rng);
            return Ok(bins.iter().map(|&b| perm[b] as f64).collect());
        }
    }
    Err(Error::Config(format!(
        "could not place all {k} classes in the train split after {MAX_BIN_RETRIES} draws"
    )))
}
