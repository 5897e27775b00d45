use latent_atlas::relgeom::{
    alpha_cosine, alpha_rank, alpha_t1, anchor_ablation, relative_embed, AnchorSet,
};
use latent_atlas::rng;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn gaussian(n: usize, k: usize, seed: u64) -> DMatrix<f64> {
    let mut g = rng::stream(seed, 0);
    DMatrix::from_fn(n, k, |_, _| g.sample::<f64, _>(StandardNormal))
}

fn orthogonal(k: usize, seed: u64) -> DMatrix<f64> {
    gaussian(k, k, seed).qr().q()
}

fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn raw_embedding_ignores_rotation_and_scale(seed in any::<u64>(), k in 2usize..8, scale in 0.01f64..100.0) {
        let z = gaussian(40, k, seed);
        let anchors = AnchorSet::sample(40, 10, seed).unwrap();
        let moved = &z * orthogonal(k, seed ^ 1) * scale;
        let a = relative_embed(&z, &anchors, false).unwrap().r;
        let b = relative_embed(&moved, &anchors, false).unwrap().r;
        prop_assert!(max_diff(&a, &b) < 1e-10);
    }

    #[test]
    fn standardized_embedding_ignores_feature_affine_maps(seed in any::<u64>(), k in 2usize..8) {
        let z = gaussian(40, k, seed);
        let anchors = AnchorSet::sample(40, 10, seed).unwrap();
        let mut g = rng::stream(seed, 1);
        let scales: Vec<f64> = (0..k).map(|_| 10f64.powf(g.random_range(-2.0..2.0))).collect();
        let shifts: Vec<f64> = (0..k).map(|_| g.random_range(-50.0..50.0)).collect();
        let moved = DMatrix::from_fn(40, k, |i, j| z[(i, j)] * scales[j] + shifts[j]);
        let a = relative_embed(&z, &anchors, true).unwrap().r;
        let b = relative_embed(&moved, &anchors, true).unwrap().r;
        prop_assert!(max_diff(&a, &b) < 1e-10);
    }

    #[test]
    fn metric_ranges_symmetry_and_identity(seed in any::<u64>(), n in 5usize..60, m in 2usize..12) {
        let r1 = gaussian(n, m, seed);
        let r2 = gaussian(n, m, seed.wrapping_add(1));
        for f in [alpha_cosine, alpha_rank] {
            let v = f(&r1, &r2).unwrap();
            prop_assert!((-1.0..=1.0).contains(&v));
            prop_assert_eq!(v, f(&r2, &r1).unwrap());
            prop_assert!((f(&r1, &r1).unwrap() - 1.0).abs() < 1e-12);
        }
        let t = alpha_t1(&r1, &r2).unwrap();
        prop_assert!((0.0..=1.0).contains(&t));
        prop_assert_eq!(t, alpha_t1(&r2, &r1).unwrap());
        prop_assert_eq!(alpha_t1(&r1, &r1).unwrap(), 1.0);
    }

    #[test]
    fn t1_ignores_increasing_maps(seed in any::<u64>()) {
        let r1 = gaussian(50, 6, seed);
        let r2 = gaussian(50, 6, seed ^ 7);
        let warped = r2.map(|x| x.powi(3) + 2.0 * x);
        prop_assert_eq!(alpha_t1(&r1, &r2).unwrap(), alpha_t1(&r1, &warped).unwrap());
    }

    #[test]
    fn rank_ignores_rowwise_increasing_maps(seed in any::<u64>()) {
        let r1 = gaussian(30, 7, seed);
        let r2 = gaussian(30, 7, seed ^ 9);
        let mut warped = r2.clone();
        for (i, mut row) in warped.row_iter_mut().enumerate() {
            let (a, b) = (1.0 + i as f64, i as f64 - 3.0);
            row.apply(|x| *x = a * *x + x.powi(3) + b);
        }
        prop_assert!((alpha_rank(&r1, &r2).unwrap() - alpha_rank(&r1, &warped).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn sampled_anchors_are_distinct_sorted_and_in_range(n in 1usize..500, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let m = ((n as f64) * frac) as usize;
        let a = AnchorSet::sample(n, m, seed).unwrap();
        prop_assert_eq!(a.m(), m);
        prop_assert!(a.indices.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(a.indices.iter().all(|&i| i < n));
        prop_assert_eq!(&a, &AnchorSet::sample(n, m, seed).unwrap());
    }
}

#[test]
fn t1_of_independent_embeddings_is_chance() {
    let (n, m) = (4000, 10);
    let t = alpha_t1(&gaussian(n, m, 1), &gaussian(n, m, 2)).unwrap();
    let p = 1.0 / m as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!((t - p).abs() < 3.0 * se, "{t}");
}

#[test]
fn ablation_spread_shrinks_with_anchor_count() {
    let za = gaussian(300, 6, 3);
    let zb = &za * orthogonal(6, 4) + gaussian(300, 6, 5) * 0.8;
    let ks = [2, 4, 8, 16, 32, 64, 128];
    let pts = anchor_ablation(&za, &zb, &ks, 30, 0).unwrap();
    let inversions = pts.windows(2).filter(|w| w[1].std > w[0].std).count();
    assert!(
        inversions <= 1,
        "{:?}",
        pts.iter().map(|p| p.std).collect::<Vec<_>>()
    );
    assert!(pts[5].std < 0.5 * pts[0].std);
}
