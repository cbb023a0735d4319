//! Many-class classification tasks carved out of regression targets.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManyClassLabels {
    /// Class id per input value, contiguous in `[0, n_classes)`.
    pub labels: Vec<usize>,
    pub n_classes: usize,
    /// Bins removed by merging (`k - n_classes`).
    pub merged: usize,
}

/// Bins `y` into `k` quantile bins whose probability widths follow a
/// symmetric Dirichlet(`alpha`), merges every bin with fewer than `min_bin`
/// members into its nearest neighbour and shuffles the class ids.
///
/// Ranks are taken after a random tie-break, so repeated values can straddle
/// a bin edge.
pub fn build_many_class_benchmark(y: &[f64], k: usize, alpha: f64, min_bin: usize, seed: u64) -> Result<ManyClassLabels> {
    if y.is_empty() {
        return Err(Error::EmptyInput("no targets to bin".into()));
    }
    if k == 0 || !(alpha > 0.0) {
        return Err(Error::Argument(format!("need k >= 1 and alpha > 0, got k={k}, alpha={alpha}")));
    }
    if y.iter().any(|v| v.is_nan()) {
        return Err(Error::Argument("targets contain NaN".into()));
    }
    let mut r = rng::stream(seed, rng::tag("many-class"));
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::Argument(e.to_string()))?;
    let g: Vec<f64> = (0..k).map(|_| gamma.sample(&mut r)).collect();
    let total: f64 = g.iter().sum();
    // upper cumulative fraction of each bin
    let mut acc = 0.0;
    let cum: Vec<f64> = g.iter().map(|v| { acc += v / total; acc }).collect();

    let n = y.len();
    let jitter: Vec<u64> = (0..n).map(|_| r.random()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(jitter[a].cmp(&jitter[b])));
    let mut bin_of = vec![0usize; n];
    let mut b = 0;
    for (rank, &i) in order.iter().enumerate() {
        let pos = (rank as f64 + 0.5) / n as f64;
        while b + 1 < k && pos > cum[b] {
            b += 1;
        }
        bin_of[i] = b;
    }

    // bins as ordered runs of ranks; drop the empty ones first
    let mut sizes = vec![0usize; k];
    bin_of.iter().for_each(|&b| sizes[b] += 1);
    let mut bins: Vec<Bin> = Vec::new();
    let mut start = 0;
    for (id, &s) in sizes.iter().enumerate() {
        if s > 0 {
            let centre = 0.5 * (y[order[start]] + y[order[start + s - 1]]);
            bins.push(Bin { members: vec![id], size: s, centre });
        }
        start += s;
    }
    while bins.len() > 1 {
        let Some((i, _)) = bins
            .iter()
            .enumerate()
            .filter(|(_, b)| b.size < min_bin)
            .min_by_key(|(_, b)| b.size)
        else {
            break;
        };
        let j = match (i.checked_sub(1), (i + 1 < bins.len()).then_some(i + 1)) {
            (Some(l), Some(rt)) => {
                let dl = (bins[i].centre - bins[l].centre).abs();
                let dr = (bins[rt].centre - bins[i].centre).abs();
                if dl < dr || (dl == dr && bins[l].size <= bins[rt].size) { l } else { rt }
            }
            (Some(l), None) => l,
            (None, Some(rt)) => rt,
            (None, None) => unreachable!(),
        };
        let taken = bins.remove(i);
        let j = if j > i { j - 1 } else { j };
        let into = &mut bins[j];
        into.centre = (into.centre * into.size as f64 + taken.centre * taken.size as f64) / (into.size + taken.size) as f64;
        into.size += taken.size;
        into.members.extend(taken.members);
    }

    let mut class_of_bin = vec![0usize; k];
    for (c, bin) in bins.iter().enumerate() {
        bin.members.iter().for_each(|&m| class_of_bin[m] = c);
    }
    let n_classes = bins.len();
    let mut ids: Vec<usize> = (0..n_classes).collect();
    ids.shuffle(&mut r);
    Ok(ManyClassLabels {
        labels: bin_of.iter().map(|&b| ids[class_of_bin[b]]).collect(),
        n_classes,
        merged: k - n_classes,
    })
}

struct Bin {
    members: Vec<usize>,
    size: usize,
    centre: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(l: &ManyClassLabels) -> Vec<usize> {
        let mut c = vec![0; l.n_classes];
        l.labels.iter().for_each(|&v| c[v] += 1);
        c
    }

    #[test]
    fn large_sample_keeps_all_bins() {
        let y: Vec<f64> = (0..53_940).map(|i| ((i * 7919) % 53_940) as f64 * 0.37).collect();
        let l = build_many_class_benchmark(&y, 100, 5.0, 10, 3).unwrap();
        assert_eq!((l.n_classes, l.merged), (100, 0));
        assert!(counts(&l).iter().all(|&c| c >= 10));
    }

    #[test]
    fn small_sample_merges_to_min_bin() {
        let y: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let l = build_many_class_benchmark(&y, 100, 5.0, 10, 1).unwrap();
        assert!(counts(&l).iter().all(|&c| c >= 10));
        assert_eq!(l.merged, 100 - l.n_classes);
        assert!(build_many_class_benchmark(&[], 10, 5.0, 10, 1).is_err());
    }

    #[test]
    fn constant_targets_collapse_to_one_class_when_short() {
        let l = build_many_class_benchmark(&[2.0; 5], 10, 5.0, 10, 0).unwrap();
        assert_eq!(l.n_classes, 1);
        assert!(l.labels.iter().all(|&v| v == 0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn bins_are_large_and_ids_contiguous(
            y in proptest::collection::vec(-100.0f64..100.0, 10..400),
            k in 1usize..60,
            seed in 0u64..1000,
        ) {
            let l = build_many_class_benchmark(&y, k, 5.0, 10, seed).unwrap();
            let c = counts(&l);
            prop_assert!(c.iter().all(|&v| v >= 10));
            prop_assert_eq!(l.merged + l.n_classes, k);
        }
    }
}
