mod oracles;

use lesiontrack::field::gaussian::blur_f64;
use lesiontrack::field::{connected_components, distance_transform, Connectivity};
use lesiontrack::grid::Grid;
use lesiontrack::prompt::ball_offsets;
use oracles::*;
use rand::Rng;

#[test]
fn separable_blur_matches_direct_convolution() {
    let mut r = rng(101);
    for case in 0..20 {
        let shape = random_shape(&mut r, 9);
        let n = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| r.gen_range(-100.0..100.0)).collect();
        let sigma: [f64; 3] = std::array::from_fn(|_| if r.gen_bool(0.1) { 0.0 } else { r.gen_range(0.3..3.0) });
        let trunc = r.gen_range(2.0..4.0);
        let fast = blur_f64(shape, &data, sigma, trunc);
        let slow = naive_blur(shape, &data, sigma, trunc);
        let err = fast.iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-5, "case {case} {shape:?} sigma {sigma:?}: {err}");
    }
}

#[test]
fn blur_preserves_constants() {
    let shape = [7, 5, 3];
    let out = blur_f64(shape, &vec![3.25; 105], [2.0, 1.0, 0.7], 3.0);
    assert!(out.iter().all(|v| (v - 3.25).abs() < 1e-12));
}

#[test]
fn distance_transform_matches_all_pairs() {
    let mut r = rng(202);
    for case in 0..25 {
        let g = Grid::new(random_shape(&mut r, 8), random_spacing(&mut r), [0.0; 3]).unwrap();
        let m = random_mask(g, r.gen_range(0.02..0.5), &mut r);
        if m.is_empty() {
            assert!(distance_transform(&m).is_err());
            continue;
        }
        let fast = distance_transform(&m).unwrap();
        let slow = brute_edt(&m);
        for (i, (a, b)) in fast.iter().zip(&slow).enumerate() {
            assert!((a - b).abs() < 1e-9, "case {case} voxel {i}: {a} vs {b}");
        }
    }
}

#[test]
fn components_match_flood_fill() {
    let mut r = rng(303);
    for case in 0..30 {
        let g = Grid::unit(random_shape(&mut r, 9));
        let m = random_mask(g, r.gen_range(0.1..0.6), &mut r);
        for conn in [Connectivity::Six, Connectivity::TwentySix] {
            let got = connected_components(&m, conn).unwrap();
            let (want, n) = bfs_components(&m, &conn.offsets());
            assert_eq!(got.num_instances() as u32, n, "case {case} {conn:?}");
            // both number components by first voxel in scan order
            let got: Vec<u32> = got.data().iter().map(|&v| v as u32).collect();
            assert_eq!(got, want, "case {case} {conn:?}");
        }
    }
}

#[test]
fn connectivity_offsets_are_face_and_full_neighbourhoods() {
    assert_eq!(Connectivity::Six.offsets().len(), 6);
    assert_eq!(Connectivity::TwentySix.offsets().len(), 26);
}

#[test]
fn ball_offsets_count_lattice_points() {
    for radius in 0..=7 {
        assert_eq!(ball_offsets(radius).len(), lattice_ball_count(radius), "r = {radius}");
    }
    assert_eq!(lattice_ball_count(5), 515);
}
