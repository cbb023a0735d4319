//! Orthogonal class-label embeddings.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::rng;

const REPULSION_STEPS: usize = 300;
const REPULSION_RATE: f64 = 0.05;

/// `[c, d]` unit rows. For `c <= d` the rows are orthonormal (QR of a Gaussian
/// matrix); otherwise a tight frame is pushed apart by minimizing the sum of
/// fourth powers of pairwise dot products.
pub fn init_orthogonal_label_embeddings(c: usize, d: usize, seed: u64) -> Vec<f64> {
    if c == 0 || d == 0 {
        return Vec::new();
    }
    let mut r = rng::stream(seed, rng::tag("label-embed"));
    let gauss = DMatrix::<f64>::from_fn(d, c, |_, _| StandardNormal.sample(&mut r));
    let rows = if c <= d {
        // columns of Q are orthonormal; they become the rows
        gauss.qr().q().transpose()
    } else {
        spread_frame(gauss.transpose(), c, d)
    };
    let mut out = Vec::with_capacity(c * d);
    for i in 0..c {
        out.extend(rows.row(i).iter());
    }
    out
}

fn normalize_rows(x: &mut DMatrix<f64>) {
    for mut row in x.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        }
    }
}

fn spread_frame(mut x: DMatrix<f64>, c: usize, d: usize) -> DMatrix<f64> {
    // nearest tight frame via the polar factor
    let svd = x.clone().svd(true, true);
    let (u, v_t) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    x = u * v_t * (c as f64 / d as f64).sqrt();
    normalize_rows(&mut x);
    for _ in 0..REPULSION_STEPS {
        let g = &x * x.transpose();
        let mut coeff = g.map(|v| 4.0 * v * v * v);
        coeff.fill_diagonal(0.0);
        let grad = coeff * &x;
        x -= grad * REPULSION_RATE;
        normalize_rows(&mut x);
    }
    x
}

/// Largest `|<e_i, e_j>|` over distinct rows.
pub fn max_abs_coherence(rows: &[f64], c: usize, d: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..c {
        for j in i + 1..c {
            let dot: f64 = rows[i * d..(i + 1) * d].iter().zip(&rows[j * d..(j + 1) * d]).map(|(a, b)| a * b).sum();
            worst = worst.max(dot.abs());
        }
    }
    worst
}
