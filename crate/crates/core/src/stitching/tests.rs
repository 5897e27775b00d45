use nalgebra::DMatrix;

use super::*;
use crate::dynsys::{Split, TrajectorySet};
use crate::forecasters::tests::{toy_set, toy_spec, wave_set};
use crate::forecasters::{train, ForecasterSpec};
use crate::relgeom::{relative_embed, AnchorSet, RelError, ZScore};

fn rel_spec(label: &str, seed: u64) -> ForecasterSpec {
    let mut s = toy_spec(label).with_seed(seed);
    s.epochs = 3;
    s
}

fn anchors(set: &TrajectorySet, m: usize) -> GlobalAnchors {
    GlobalAnchors::sample(set, 4, 3, m, 11).unwrap()
}

#[test]
fn codes_have_anchor_width_for_any_latent_size() {
    let set = wave_set();
    let ga = anchors(&set, 8);
    for k in [2, 5] {
        let mut spec = rel_spec("MLP", 0);
        spec.latent_dim = k;
        let rf = train_relative(&spec, &set, &ga).unwrap();
        assert_eq!(rf.m(), 8);
        assert_eq!(rf.latent_dim(), k);
        assert_eq!(rf.params.get("dec.l0.w").unwrap().shape(), &[8, spec.width]);
        let (x, _) =
            crate::forecasters::batch_tensors(&set, Split::Test, &ga.refs[..3], 4, 3).unwrap();
        assert_eq!(rf.relative_codes(&x).unwrap().shape(), &[3, 8]);
    }
}

#[test]
fn default_anchor_count() {
    let set = toy_set(80, 2, |j, t, c| {
        (0.2 * t as f64 + j as f64 + c as f64).cos()
    });
    assert_eq!(
        GlobalAnchors::sample(&set, 4, 3, STITCH_ANCHORS, 0)
            .unwrap()
            .m(),
        32
    );
}

#[test]
fn identical_windows_give_degenerate_anchor_columns() {
    let set = toy_set(40, 2, |_, _, c| 0.5 + c as f64);
    let ga = anchors(&set, 4);
    let err = train_relative(&rel_spec("MLP", 0), &set, &ga).unwrap_err();
    assert!(
        matches!(err, StitchError::Rel(RelError::DegenerateFeature { .. })),
        "{err:?}"
    );
}

#[test]
fn recurrent_families_are_rejected() {
    let set = wave_set();
    let ga = anchors(&set, 4);
    for label in ["RNN", "A-RNN", "ESN"] {
        assert!(matches!(
            train_relative(&rel_spec(label, 0), &set, &ga),
            Err(StitchError::Unsupported(_))
        ));
    }
}

#[test]
fn self_stitch_is_own_evaluation() {
    let set = wave_set();
    let ga = anchors(&set, 6);
    for label in ["MLP", "K-MLP", "N-MLP", "TF"] {
        let rf = train_relative(&rel_spec(label, 1), &set, &ga).unwrap();
        let own = rf.evaluate(&set, Split::Test).unwrap();
        assert_eq!(stitch(&rf, &rf, &set).unwrap(), own, "{label}");
        assert_eq!(stitch(&rf, &rf, &set).unwrap(), own);
        assert_eq!(
            rf.recompute_anchor_latents(&set).unwrap(),
            rf.anchor_latents
        );
        assert_eq!(rf.evaluate(&set, Split::Val).unwrap().mse, rf.best_val_mse);
    }
}

#[test]
fn different_anchor_windows_cannot_stitch() {
    let set = wave_set();
    let a = train_relative(&rel_spec("MLP", 0), &set, &anchors(&set, 5)).unwrap();
    let other = GlobalAnchors::sample(&set, 4, 3, 5, 12).unwrap();
    assert_ne!(other.refs, a.global_anchors.refs);
    let b = train_relative(&rel_spec("MLP", 0), &set, &other).unwrap();
    assert!(matches!(
        stitch(&a, &b, &set),
        Err(StitchError::AnchorMismatch(_))
    ));
}

#[test]
fn transform_matches_relative_embedding_with_anchor_zscore() {
    let set = wave_set();
    let ga = anchors(&set, 6);
    let rf = train_relative(&rel_spec("MLP", 2), &set, &ga).unwrap();
    let refs = set.window_refs(Split::Test, 4, 3, 1).unwrap();
    let (x, _) = crate::forecasters::batch_tensors(&set, Split::Test, &refs, 4, 3).unwrap();
    let codes = rf.relative_codes(&x).unwrap();

    // Sample latents stacked with the anchor latents, anchors as the trailing rows.
    let z = rf.encode_batch(&x).unwrap();
    let (n, k, m) = (refs.len(), rf.latent_dim(), rf.m());
    let mut all = DMatrix::zeros(n + m, k);
    for i in 0..n {
        all.row_mut(i).copy_from_slice(z.row(i));
    }
    for a in 0..m {
        all.row_mut(n + a).copy_from_slice(rf.anchor_latents.row(a));
    }
    let anchor_rows = AnchorSet::new((n..n + m).collect(), n + m).unwrap();
    let rel = relative_embed(&all, &anchor_rows, false)
        .unwrap()
        .r
        .rows(0, n)
        .into_owned();
    let stats = ZScore {
        mean: rf.anchor_mean.clone(),
        std: rf.anchor_std.clone(),
    };
    let expected = stats.apply(&rel).unwrap();
    for i in 0..n {
        for j in 0..m {
            assert!((codes.at(i, j) - expected[(i, j)]).abs() < 1e-12);
        }
    }
}

#[test]
fn stitching_is_deterministic_and_json_round_trips() {
    let set = wave_set();
    let ga = anchors(&set, 5);
    let a = train_relative(&rel_spec("MLP", 0), &set, &ga).unwrap();
    let b = train_relative(&rel_spec("MLP", 1), &set, &ga).unwrap();
    let back = RelativeForecaster::from_json(&a.to_json().unwrap()).unwrap();
    assert_eq!(back, a);
    assert_eq!(
        stitch(&back, &b, &set).unwrap(),
        stitch(&a, &b, &set).unwrap()
    );
}

#[test]
fn grid_collapses_seed_pairs_to_families() {
    let set = wave_set();
    let ga = anchors(&set, 5);
    let list: Vec<_> = ["MLP", "TF"]
        .iter()
        .flat_map(|l| (0..2).map(move |s| (l, s)))
        .map(|(l, s)| train_relative(&rel_spec(l, s), &set, &ga).unwrap())
        .collect();
    let table = stitch_grid(StitchInstances::Relative(&list), &set).unwrap();
    assert_eq!(table.pairs.len(), 16);
    assert_eq!(table.families, vec!["MLP", "TF"]);
    let cell = table.cell("MLP", "TF").unwrap();
    assert_eq!(cell.rel_pairs, 4);
    assert_eq!(cell.abs_mse, None);
    let direct: f64 = [(0, 2), (0, 3), (1, 2), (1, 3)]
        .iter()
        .map(|&(i, j)| stitch(&list[i], &list[j], &set).unwrap().mse)
        .sum::<f64>()
        / 4.0;
    assert!((cell.rel_mse.unwrap() - direct).abs() < 1e-15);
    let self_pair = table
        .pairs
        .iter()
        .find(|p| p.encoder == "TF#1" && p.decoder == "TF#1")
        .unwrap();
    assert_eq!(
        self_pair.mse,
        Some(list[3].evaluate(&set, Split::Test).unwrap().mse)
    );

    let csv = table.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "encoder,MLP_abs,MLP_rel,TF_abs,TF_rel");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("MLP,,"));
}

#[test]
fn absolute_grid_marks_mismatched_latents_absent() {
    let set = wave_set();
    let ckpts = vec![
        train(&rel_spec("MLP", 0), &set).unwrap(),
        train(&rel_spec("TF", 0), &set).unwrap(),
        {
            let mut s = rel_spec("K-MLP", 0);
            s.latent_dim = 4;
            train(&s, &set).unwrap()
        },
    ];
    let table = stitch_grid(StitchInstances::Absolute(&ckpts), &set).unwrap();
    assert_eq!(table.cell("MLP", "K-MLP").unwrap().abs_mse, None);
    assert_eq!(table.cell("K-MLP", "TF").unwrap().abs_mse, None);
    assert!(table.cell("MLP", "TF").unwrap().abs_mse.is_some());
    let own = crate::forecasters::evaluate(&ckpts[1], &set, Split::Test).unwrap();
    assert_eq!(stitch_absolute(&ckpts[1], &ckpts[1], &set).unwrap(), own);
    assert!(matches!(
        stitch_absolute(&ckpts[0], &ckpts[2], &set),
        Err(StitchError::DimMismatch {
            encoder: 3,
            decoder: 4
        })
    ));
    assert!(table.to_csv().lines().nth(1).unwrap().contains(",,"));
    let merged = table.clone().merge(table);
    assert_eq!(merged.cell("MLP", "TF").unwrap().abs_pairs, 2);
}
