use nalgebra::DMatrix;

use super::embed::unit_rows;
use super::{AnchorSet, RelError, ZScore};

/// Cosines of a time-ordered latent track against three anchors of a sample set.
///
/// Both matrices are z-scored with the sample set's feature statistics; the
/// result has one row per track step and one column per anchor.
pub fn temporal_track(
    sample: &DMatrix<f64>,
    track: &DMatrix<f64>,
    anchors: &AnchorSet,
) -> Result<DMatrix<f64>, RelError> {
    if anchors.m() != 3 {
        return Err(RelError::Shape(format!(
            "temporal tracks use 3 anchors, got {}",
            anchors.m()
        )));
    }
    if let Some(&bad) = anchors.indices.iter().find(|&&i| i >= sample.nrows()) {
        return Err(RelError::BadAnchor {
            index: bad,
            n: sample.nrows(),
        });
    }
    let stats = ZScore::fit(sample)?;
    let a = unit_rows(&stats.apply(&sample.select_rows(&anchors.indices))?)?;
    let t = unit_rows(&stats.apply(track)?)?;
    Ok(t * a.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_track_closes() {
        let circle = |n: usize| {
            DMatrix::from_fn(n, 2, |i, j| {
                let th = std::f64::consts::TAU * i as f64 / (n - 1) as f64;
                if j == 0 {
                    th.cos()
                } else {
                    th.sin()
                }
            })
        };
        let sample = circle(50);
        let track = circle(301);
        let anchors = AnchorSet::new(vec![0, 10, 30], 50).unwrap();
        let tr = temporal_track(&sample, &track, &anchors).unwrap();
        assert_eq!(tr.shape(), (301, 3));
        assert!((tr.row(0) - tr.row(300)).amax() < 1e-9);
        assert_eq!(temporal_track(&sample, &track, &anchors).unwrap(), tr);
    }

    #[test]
    fn needs_three_anchors() {
        let s = DMatrix::from_fn(5, 2, |i, j| (i + j * j) as f64);
        assert!(temporal_track(&s, &s, &AnchorSet::new(vec![0, 1], 5).unwrap()).is_err());
    }
}
