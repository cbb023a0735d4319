//! Ancestral sampling of SCM node values.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::graph::{topological_order, Noise, ScmGraph};
use crate::error::{Error, Result};
use crate::rng;

/// Resampling attempts after the first draw produced non-finite values.
pub const MAX_RETRIES: usize = 3;

/// Location shift applied to root noise on a subset of rows (out-of-
/// distribution test rows).
#[derive(Debug, Clone)]
pub struct RootShift {
    pub rows: Vec<bool>,
    /// Additive offset per node; only root entries are used.
    pub offsets: Vec<f64>,
}

/// Draw `n` noise values from `rng`.
pub fn draw_noise<R: Rng>(noise: &Noise, n: usize, rng: &mut R) -> Vec<f64> {
    match *noise {
        Noise::Gaussian { std } => {
            let d = Normal::new(0.0, std).expect("non-negative std");
            (0..n).map(|_| d.sample(rng)).collect()
        }
        Noise::Uniform { half_width } => {
            if half_width == 0.0 {
                vec![0.0; n]
            } else {
                (0..n).map(|_| rng.random_range(-half_width..half_width)).collect()
            }
        }
    }
}

/// Node values, one column per node. Node `i` draws from stream `i` of
/// `seed`. Non-finite values trigger a retry with a derived seed, up to
/// [`MAX_RETRIES`] times.
pub fn evaluate_scm(graph: &ScmGraph, n_rows: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    evaluate_scm_shifted(graph, n_rows, seed, None)
}

pub fn evaluate_scm_shifted(
    graph: &ScmGraph,
    n_rows: usize,
    seed: u64,
    shift: Option<&RootShift>,
) -> Result<Vec<Vec<f64>>> {
    let order = topological_order(graph)?;
    for attempt in 0..=MAX_RETRIES {
        let s = if attempt == 0 { seed } else { rng::derive_seed(seed, attempt as u64) };
        if let Some(values) = evaluate_once(graph, &order, n_rows, s, shift)? {
            return Ok(values);
        }
    }
    Err(Error::NonFinite { attempts: MAX_RETRIES + 1 })
}

fn evaluate_once(
    graph: &ScmGraph,
    order: &[usize],
    n_rows: usize,
    seed: u64,
    shift: Option<&RootShift>,
) -> Result<Option<Vec<Vec<f64>>>> {
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); graph.n_nodes];
    for &node in order {
        let spec = &graph.nodes[node];
        let parents = graph.parents(node);
        let mut rng = rng::stream(seed, node as u64);
        let col = if parents.is_empty() {
            let mut col = draw_noise(&spec.noise, n_rows, &mut rng);
            if let Some(sh) = shift {
                let off = sh.offsets.get(node).copied().unwrap_or(0.0);
                for (v, &on) in col.iter_mut().zip(&sh.rows) {
                    if on {
                        *v += off;
                    }
                }
            }
            col
        } else {
            let mechanism = spec.mechanism.as_ref().ok_or_else(|| {
                Error::InvalidGraph(format!("node {node} has parents but no mechanism"))
            })?;
            let cols: Vec<&[f64]> = parents.iter().map(|&p| values[p].as_slice()).collect();
            let mut pre = mechanism.apply(&cols)?;
            if spec.standardize {
                standardize(&mut pre);
            }
            let noise = draw_noise(&spec.noise, n_rows, &mut rng);
            spec.activation
                .apply(&pre)
                .into_iter()
                .zip(noise)
                .map(|(a, e)| a + e)
                .collect()
        };
        if col.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        values[node] = col;
    }
    Ok(Some(values))
}

fn standardize(x: &mut [f64]) {
    if x.iter().any(|v| !v.is_finite()) {
        return;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    for v in x.iter_mut() {
        *v -= mean;
        if sd > 1e-12 {
            *v /= sd;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::graph::NodeSpec;
    use crate::prior::mechanism::{Activation, Mechanism};

    #[test]
    fn single_root_is_a_direct_draw() {
        let g = ScmGraph::new(1, vec![], vec![NodeSpec::root(Noise::Gaussian { std: 1.0 })]).unwrap();
        let vals = evaluate_scm(&g, 16, 42).unwrap();
        let mut r = rng::stream(42, 0);
        let d = Normal::new(0.0, 1.0).unwrap();
        let want: Vec<f64> = (0..16).map(|_| d.sample(&mut r)).collect();
        assert_eq!(vals[0], want);
    }

    #[test]
    fn identity_chain_copies_parent() {
        let child = NodeSpec {
            noise: Noise::zero(),
            mechanism: Some(Mechanism::Linear { weights: vec![1.0], bias: 0.0 }),
            activation: Activation::Identity,
            standardize: false,
        };
        let g = ScmGraph::new(2, vec![(0, 1)], vec![NodeSpec::root(Noise::Gaussian { std: 1.0 }), child])
            .unwrap();
        let vals = evaluate_scm(&g, 32, 5).unwrap();
        assert_eq!(vals[0], vals[1]);
    }

    #[test]
    fn overflow_exhausts_retries() {
        let child = NodeSpec {
            noise: Noise::zero(),
            mechanism: Some(Mechanism::Linear { weights: vec![f64::MAX], bias: 0.0 }),
            activation: Activation::Identity,
            standardize: false,
        };
        let g = ScmGraph::new(
            2,
            vec![(0, 1)],
            vec![NodeSpec::root(Noise::Uniform { half_width: 0.0 }), child.clone()],
        )
        .unwrap();
        // parent is exactly zero, so nothing overflows
        assert!(evaluate_scm(&g, 4, 1).is_ok());
        let g = ScmGraph::new(
            2,
            vec![(0, 1)],
            vec![NodeSpec::root(Noise::Gaussian { std: 1e10 }), child],
        )
        .unwrap();
        assert!(matches!(evaluate_scm(&g, 4, 1), Err(Error::NonFinite { attempts: 4 })));
    }

    #[test]
    fn root_shift_moves_test_rows() {
        let g = ScmGraph::new(1, vec![], vec![NodeSpec::root(Noise::Gaussian { std: 1.0 })]).unwrap();
        let n = 400;
        let rows: Vec<bool> = (0..n).map(|i| i >= n / 2).collect();
        let shift = RootShift { rows: rows.clone(), offsets: vec![3.0] };
        let vals = evaluate_scm_shifted(&g, n, 9, Some(&shift)).unwrap();
        let mean = |pick: bool| {
            let v: Vec<f64> = (0..n).filter(|&i| rows[i] == pick).map(|i| vals[0][i]).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean(true) - mean(false) >= 2.0);
    }
}
