//! SVD feature augmentation.

use nalgebra::DMatrix;

/// Default number of appended SVD components.
pub const DEFAULT_SVD_COMPONENTS: usize = 8;

/// Top right-singular directions of a training matrix. Projecting a row onto
/// them gives its left-singular scores scaled by the singular values.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdProjection {
    /// Column means used to impute missing cells.
    pub means: Vec<f64>,
    /// `k` unit vectors of length `n_cols`, by descending singular value.
    pub components: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
}

impl SvdProjection {
    /// Fit on `columns` (column-major). `k` is clamped to `min(n_rows, n_cols)`.
    pub fn fit(columns: &[Vec<f64>], k: usize) -> SvdProjection {
        let f = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        let means: Vec<f64> = columns
            .iter()
            .map(|c| {
                let obs: Vec<f64> = c.iter().copied().filter(|v| v.is_finite()).collect();
                if obs.is_empty() { 0.0 } else { obs.iter().sum::<f64>() / obs.len() as f64 }
            })
            .collect();
        let k = k.min(n).min(f);
        if k == 0 {
            return SvdProjection { means, components: Vec::new(), singular_values: Vec::new() };
        }
        let m = DMatrix::from_fn(n, f, |r, c| {
            let v = columns[c][r];
            if v.is_finite() { v } else { means[c] }
        });
        let svd = m.svd(false, true);
        let v_t = svd.v_t.expect("requested V^T");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
        let mut components = Vec::with_capacity(k);
        let mut singular_values = Vec::with_capacity(k);
        for &i in order.iter().take(k) {
            let mut v: Vec<f64> = v_t.row(i).iter().copied().collect();
            // deterministic sign: largest-magnitude entry positive
            let pivot = v.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
            if pivot < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            components.push(v);
            singular_values.push(svd.singular_values[i]);
        }
        SvdProjection { means, components, singular_values }
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// Scores of every row of `columns`, one output column per component.
    pub fn project(&self, columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = columns.first().map_or(0, Vec::len);
        self.components
            .iter()
            .map(|comp| {
                (0..n)
                    .map(|r| {
                        comp.iter()
                            .zip(columns)
                            .zip(&self.means)
                            .map(|((w, col), mean)| {
                                let v = col[r];
                                w * if v.is_finite() { v } else { *mean }
                            })
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }
}

/// Append the first `k` SVD scores of `columns` as extra columns.
pub fn svd_augment(columns: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    let mut out = columns.to_vec();
    if k == 0 {
        return out;
    }
    let proj = SvdProjection::fit(columns, k);
    out.extend(proj.project(columns));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn rank_one_scores_recovered() {
        let u = [0.5, -1.0, 2.0, 0.3, -0.7, 1.1];
        let v = [1.0, -2.0, 0.5];
        let cols: Vec<Vec<f64>> = v.iter().map(|vj| u.iter().map(|ui| ui * vj).collect()).collect();
        let out = svd_augment(&cols, 1);
        assert_eq!(out.len(), 4);
        assert_eq!(&out[..3], &cols[..]);
        assert!(corr(&out[3], &u).abs() > 0.999);
    }

    #[test]
    fn k_zero_is_noop() {
        let cols = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert_eq!(svd_augment(&cols, 0), cols);
    }

    #[test]
    fn orthogonal_columns_give_diagonal_gram() {
        let cols = vec![
            vec![1.0, 1.0, 1.0, 1.0],
            vec![2.0, -2.0, 2.0, -2.0],
            vec![0.5, 0.5, -0.5, -0.5],
        ];
        let out = svd_augment(&cols, 2);
        let (a, b) = (&out[3], &out[4]);
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        assert!(dot.abs() < 1e-8);
    }

    #[test]
    fn missing_cells_use_column_mean() {
        let cols = vec![vec![1.0, f64::NAN, 3.0], vec![2.0, 2.0, 2.0]];
        let p = SvdProjection::fit(&cols, 1);
        assert_eq!(p.means, vec![2.0, 2.0]);
        let filled = vec![vec![1.0, 2.0, 3.0], vec![2.0, 2.0, 2.0]];
        assert_eq!(p.project(&cols), p.project(&filled));
    }
}
