use std::collections::BTreeSet;

use fleetmon::clustering::{self, Linkage, Partition};
use fleetmon::detection;
use fleetmon::dissimilarity::{self, CostMode, DissimilarityMatrix, Measure};
use fleetmon::signal::{self, NormMode, Series};
use proptest::prelude::*;

fn series(v: &[f64]) -> Series {
    Series::from_scalars(v.to_vec(), 1.0).unwrap()
}

fn samples(len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, len)
}

/// Symmetric matrix with zero diagonal and positive off-diagonal entries.
fn matrix(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    n.prop_flat_map(|n| prop::collection::vec(0.01f64..10.0, n * (n - 1) / 2).prop_map(move |upper| {
        let mut d = vec![vec![0.0; n]; n];
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                d[i][j] = upper[k];
                d[j][i] = upper[k];
                k += 1;
            }
        }
        d
    }))
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("m{i:02}")).collect()
}

fn as_sets(p: &Partition) -> BTreeSet<BTreeSet<String>> {
    p.clusters.iter().map(|c| c.iter().cloned().collect()).collect()
}

fn partition_of(d: &[Vec<f64>], names: Vec<String>, thr: f64) -> Partition {
    let m = DissimilarityMatrix::new(names, d.to_vec(), "test").unwrap();
    let dendrogram = clustering::agglomerate(&m, Linkage::Single).unwrap();
    clustering::partition(&dendrogram, &m, thr).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn minmax_ignores_positive_affine_maps(x in samples(2..=60), a in 0.01f64..100.0, b in -50.0f64..50.0) {
        let spread = x.iter().copied().fold(f64::NEG_INFINITY, f64::max) - x.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assume!(spread > 1e-6);
        let base = signal::normalize(&series(&x), NormMode::Minmax).unwrap();
        let moved: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let out = signal::normalize(&series(&moved), NormMode::Minmax).unwrap();
        for (p, q) in base.values().iter().zip(out.values()) {
            prop_assert!((p - q).abs() < 1e-9);
        }
        prop_assert!(out.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn percentile_scaling_keeps_the_argmax(x in samples(5..=60), a in 0.01f64..100.0, b in -50.0f64..50.0) {
        let argmax = |v: &[f64]| v.iter().enumerate().max_by(|p, q| p.1.total_cmp(q.1)).unwrap().0;
        let moved: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        if let Ok(out) = signal::normalize(&series(&moved), NormMode::Percentile) {
            prop_assert_eq!(argmax(out.values()), argmax(&x));
        }
    }

    #[test]
    fn dtw_never_exceeds_lockstep_distance(x in samples(3..=30), y in samples(3..=30), psi in 0usize..3) {
        let n = x.len().min(y.len());
        let (x, y) = (&x[..n], &y[..n]);
        let d = dissimilarity::dtw(&series(x), &series(y), psi, CostMode::DiffNorm).unwrap().distance;
        let e = dissimilarity::euclidean(&series(x), &series(y), CostMode::DiffNorm).unwrap();
        prop_assert!(d <= e * (1.0 + 1e-12));
    }

    #[test]
    fn dtw_does_not_grow_with_psi(x in samples(4..=25), y in samples(4..=25)) {
        let max_psi = x.len().min(y.len()) - 1;
        let mut last = f64::INFINITY;
        for psi in 0..=max_psi.min(6) {
            let d = dissimilarity::dtw(&series(&x), &series(&y), psi, CostMode::DiffNorm).unwrap().distance;
            prop_assert!(d <= last);
            last = d;
        }
    }

    #[test]
    fn dtw_is_symmetric(x in samples(1..=25), y in samples(1..=25), psi in 0usize..4) {
        prop_assume!(psi < x.len().min(y.len()));
        let a = dissimilarity::dtw(&series(&x), &series(&y), psi, CostMode::DiffNorm).unwrap();
        let b = dissimilarity::dtw(&series(&y), &series(&x), psi, CostMode::DiffNorm).unwrap();
        prop_assert!((a.distance - b.distance).abs() <= 1e-9 * (1.0 + a.distance));
        a.path.validate(x.len(), y.len()).unwrap();
        prop_assert!(dissimilarity::dtw(&series(&x), &series(&x), psi, CostMode::DiffNorm).unwrap().distance == 0.0);
    }

    #[test]
    fn normalized_warping_lies_in_unit_interval(x in samples(2..=30), y in samples(2..=30), psi in 0usize..3) {
        prop_assume!(psi < x.len().min(y.len()));
        let m = Measure::WarpingAmount { psi, normalized: true, cost: CostMode::DiffNorm };
        let w = m.evaluate(&series(&x), &series(&y)).unwrap();
        prop_assert!((0.0..1.0).contains(&w), "{}", w);
    }

    #[test]
    fn raising_thr_cc_coarsens_the_partition(d in matrix(2..=12), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let fine = partition_of(&d, ids(d.len()), lo);
        let coarse = partition_of(&d, ids(d.len()), hi);
        prop_assert!(fine.len() >= coarse.len());
        // Every fine cluster sits inside one coarse cluster.
        for c in &fine.clusters {
            let owners: BTreeSet<_> = c.iter().map(|id| coarse.cluster_of(id).unwrap()).collect();
            prop_assert_eq!(owners.len(), 1);
        }
    }

    #[test]
    fn partition_is_a_disjoint_cover(d in matrix(2..=12), thr in 0.0f64..1.0) {
        let p = partition_of(&d, ids(d.len()), thr);
        let mut all: Vec<String> = p.clusters.iter().flatten().cloned().collect();
        all.sort();
        prop_assert_eq!(all, ids(d.len()));
        prop_assert!(p.clusters.iter().all(|c| !c.is_empty()));
    }

    #[test]
    fn relabelling_machines_relabels_the_partition(d in matrix(3..=10), thr in 0.0f64..1.0, seed in any::<u64>()) {
        let n = d.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let names = ids(n);
        let shuffled: Vec<Vec<f64>> = perm.iter().map(|&a| perm.iter().map(|&b| d[a][b]).collect()).collect();
        let shuffled_names: Vec<String> = perm.iter().map(|&a| names[a].clone()).collect();
        let base = partition_of(&d, names, thr);
        let other = partition_of(&shuffled, shuffled_names, thr);
        prop_assert_eq!(as_sets(&base), as_sets(&other));
    }

    #[test]
    fn debounce_depends_only_on_the_past(history in prop::collection::vec(any::<bool>(), 0..80), n in 1usize..8, cut in 0usize..80) {
        let full = detection::debounce(&history, n);
        let k = cut.min(history.len());
        prop_assert_eq!(&detection::debounce(&history[..k], n)[..], &full[..k]);
        for (t, &f) in full.iter().enumerate() {
            let expected = t + 1 >= n && history[t + 1 - n..=t].iter().all(|&a| a);
            prop_assert_eq!(f, expected);
        }
    }

    #[test]
    fn classify_is_monotone_in_the_threshold(scores in prop::collection::vec(0.0f64..1.0, 1..20), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        for (a, b) in detection::classify(&scores, hi).iter().zip(detection::classify(&scores, lo)) {
            prop_assert!(!a || b);
        }
    }

    #[test]
    fn sigma_band_ignores_a_common_shift(
        v in prop::collection::vec(-10.0f64..10.0, 3..15),
        shift in -100.0f64..100.0,
        sigma in 0.5f64..4.0,
    ) {
        let rows = |off: f64| v.iter().map(|x| vec![x + off]).collect::<Vec<_>>();
        let a = detection::sigma_band_baseline(&rows(0.0), sigma, false).unwrap();
        let b = detection::sigma_band_baseline(&rows(shift), sigma, false).unwrap();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
        for (i, x) in v.iter().enumerate() {
            // Rounding may only matter right at the band edge.
            if ((x - mean).abs() - sigma * sd).abs() > 1e-9 * (1.0 + shift.abs()) {
                prop_assert_eq!(a.faulty[i], b.faulty[i]);
            }
        }
    }

    #[test]
    fn f1_is_the_harmonic_mean(tp in 0u64..50, fp in 0u64..50, fn_ in 0u64..50, tn in 0u64..50) {
        let m = detection::metrics(&detection::ConfusionCounts { tp, fp, fn_, tn });
        if tp > 0 {
            let p = tp as f64 / (tp + fp) as f64;
            let r = tp as f64 / (tp + fn_) as f64;
            prop_assert!((m.precision - p).abs() < 1e-12);
            prop_assert!((m.recall - r).abs() < 1e-12);
            prop_assert!((m.f1 - 2.0 * p * r / (p + r)).abs() < 1e-12);
            prop_assert!(m.f1 <= m.precision.max(m.recall) && m.f1 >= m.precision.min(m.recall));
        } else {
            prop_assert_eq!(m.f1, 0.0);
        }
    }
}
