use lesiontrack::field::gaussian::blur_f64;
use lesiontrack::field::{connected_components, distance_transform, Connectivity};
use lesiontrack::grid::{Grid, Point3};
use lesiontrack::metrics::{aggregate, dice, evaluate_scan, match_centroids, nsd, EvalConfig, Weighting};
use lesiontrack::{BinaryMask, InstanceMask};
use proptest::prelude::*;

fn mask_pair() -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
    (1usize..7, 1usize..7, 1usize..7).prop_flat_map(|(x, y, z)| {
        let n = x * y * z;
        (proptest::collection::vec(any::<bool>(), n), proptest::collection::vec(any::<bool>(), n)).prop_map(
            move |(a, b)| {
                let g = Grid::unit([x, y, z]);
                (BinaryMask::new(g, a).unwrap(), BinaryMask::new(g, b).unwrap())
            },
        )
    })
}

fn points(max: usize) -> impl Strategy<Value = Vec<(u16, Point3)>> {
    proptest::collection::vec(proptest::array::uniform3(0.0..50.0f64), 0..max).prop_map(|v| {
        v.into_iter().enumerate().map(|(i, p)| (i as u16 + 1, Point3(p))).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dice_is_symmetric_and_bounded((a, b) in mask_pair()) {
        let d = dice(&a, &b).unwrap();
        prop_assert_eq!(d, dice(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(dice(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn nsd_is_symmetric_and_monotone_in_tolerance((a, b) in mask_pair(), t in 0.0..4.0f64) {
        let lo = nsd(&a, &b, t).unwrap();
        prop_assert!((lo - nsd(&b, &a, t).unwrap()).abs() < 1e-12);
        prop_assert!(nsd(&a, &b, t + 1.0).unwrap() >= lo);
        prop_assert!((0.0..=1.0).contains(&lo));
    }

    #[test]
    fn distance_is_zero_exactly_on_foreground((a, _) in mask_pair()) {
        prop_assume!(!a.is_empty());
        let d = distance_transform(&a).unwrap();
        for (v, &f) in d.iter().zip(a.data()) {
            prop_assert_eq!(*v == 0.0, f);
        }
    }

    #[test]
    fn face_components_refine_full_components((a, _) in mask_pair()) {
        let six = connected_components(&a, Connectivity::Six).unwrap();
        let full = connected_components(&a, Connectivity::TwentySix).unwrap();
        prop_assert!(six.num_instances() >= full.num_instances());
        prop_assert_eq!(six.foreground(), a.clone());
        // voxels sharing a face component share a full component
        let mut map = std::collections::HashMap::new();
        for (&s, &f) in six.data().iter().zip(full.data()) {
            prop_assert_eq!(*map.entry(s).or_insert(f), f);
        }
    }

    #[test]
    fn blur_stays_within_input_range(
        data in proptest::collection::vec(-50.0..50.0f64, 60),
        s in proptest::array::uniform3(0.0..3.0f64),
    ) {
        let out = blur_f64([5, 4, 3], &data, s, 3.0);
        let lo = data.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for v in out {
            prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
        }
    }

    #[test]
    fn matching_is_one_to_one_and_gated(gt in points(7), pred in points(7), thr in 1.0..30.0f64) {
        let m = match_centroids(&gt, &pred, thr);
        let mut seen = std::collections::HashSet::new();
        for p in &m.pairs {
            prop_assert!(p.distance_mm <= thr);
            prop_assert!(seen.insert(p.pred_label));
        }
        prop_assert_eq!(m.pairs.len() + m.unmatched_gt.len(), gt.len());
        prop_assert_eq!(m.pairs.len() + m.unmatched_pred.len(), pred.len());
    }

    #[test]
    fn aggregate_ignores_scan_order(seed in any::<u64>(), rot in 0usize..6) {
        use rand::{Rng, SeedableRng};
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = Grid::unit([6, 6, 6]);
        let cfg = EvalConfig::default();
        let scans: Vec<_> = (0..6)
            .map(|i| {
                let gt: Vec<u16> = (0..g.len()).map(|_| u16::from(r.gen_bool(0.2))).collect();
                let pred: Vec<u16> = (0..g.len()).map(|_| u16::from(r.gen_bool(0.2))).collect();
                evaluate_scan(
                    ["A", "B"][i % 2],
                    &format!("s{i}"),
                    &InstanceMask::from_labels(g, gt).unwrap(),
                    &InstanceMask::from_labels(g, pred).unwrap(),
                    &cfg,
                )
                .unwrap()
            })
            .collect();
        for w in [Weighting::PatientMean, Weighting::ScanMean] {
            let a = aggregate(scans.clone(), w).unwrap();
            let mut shuffled = scans.clone();
            shuffled.rotate_left(rot);
            shuffled.swap(0, 5);
            let b = aggregate(shuffled, w).unwrap();
            for (x, y) in [
                (a.overall.dice, b.overall.dice),
                (a.overall.nsd, b.overall.nsd),
                (a.overall.cpm_at_25, b.overall.cpm_at_25),
                (a.overall.med_mm, b.overall.med_mm),
            ] {
                match (x, y) {
                    (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9),
                    (x, y) => prop_assert_eq!(x, y),
                }
            }
            prop_assert_eq!(a.counts, b.counts);
        }
    }
}
