use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Rotate consecutive pairs `(2i, 2i+1)` of `x` by `position * base^(-2i/D)`.
pub fn rope_rotate<T: Scalar>(x: &mut [T], position: f64, base: f64) {
    let d = x.len();
    for i in 0..d / 2 {
        let theta = position * base.powf(-2.0 * i as f64 / d as f64);
        let (s, c) = theta.sin_cos();
        let (s, c) = (T::lit(s), T::lit(c));
        let (a, b) = (x[2 * i], x[2 * i + 1]);
        x[2 * i] = a * c - b * s;
        x[2 * i + 1] = a * s + b * c;
    }
}

/// Rotary position embedding over rows of `x: [T, D]`.
pub fn rope_apply<T: Scalar>(x: &Tensor<T>, positions: &[f64], base: f64) -> Result<Tensor<T>> {
    if x.rank() != 2 || positions.len() != x.dim(0) {
        return Err(Error::Dimension(format!(
            "rope: x {:?} with {} positions",
            x.shape(),
            positions.len()
        )));
    }
    if x.dim(1) % 2 != 0 {
        return Err(Error::Config(format!("rope needs an even width, got {}", x.dim(1))));
    }
    if base <= 0.0 {
        return Err(Error::Config("rope base must be positive".into()));
    }
    let mut out = x.clone();
    for (t, &p) in positions.iter().enumerate() {
        rope_rotate(out.row_mut(t), p, base);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn position_zero_is_identity() {
        let x = Tensor::<f64>::from_fn(&[1, 6], |i| i as f64 - 2.5);
        let y = rope_apply(&x, &[0.0], 100_000.0).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn two_dims_base_one_is_plain_rotation() {
        let p = 0.7;
        let x = Tensor::<f64>::new(&[1, 2], vec![1.3, -0.4]).unwrap();
        let y = rope_apply(&x, &[p], 1.0).unwrap();
        let want = [1.3 * p.cos() + 0.4 * p.sin(), 1.3 * p.sin() - 0.4 * p.cos()];
        assert!((y.data()[0] - want[0]).abs() < 1e-15);
        assert!((y.data()[1] - want[1]).abs() < 1e-15);
    }

    #[test]
    fn odd_width_rejected() {
        let x = Tensor::<f64>::zeros(&[1, 3]);
        assert!(matches!(rope_apply(&x, &[1.0], 10.0), Err(Error::Config(_))));
    }

    proptest! {
        #[test]
        fn preserves_row_norms(vals in prop::collection::vec(-10.0f64..10.0, 8), pos in 0.0f64..5000.0) {
            let x = Tensor::<f64>::new(&[2, 4], vals).unwrap();
            let y = rope_apply(&x, &[pos, pos * 0.5], 100_000.0).unwrap();
            for r in 0..2 {
                let a: f64 = x.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
                let b: f64 = y.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
                prop_assert!((a - b).abs() <= 1e-10 * a.max(1e-12));
            }
        }
    }
}
