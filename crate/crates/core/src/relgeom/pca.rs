use nalgebra::DMatrix;

use super::RelError;
use crate::linalg::center_cols;

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    /// `N × n` projected coordinates.
    pub coords: DMatrix<f64>,
    /// `k × n` unit loading vectors, one per column.
    pub components: DMatrix<f64>,
    /// Fraction of total variance per component.
    pub explained: Vec<f64>,
}

/// Projects centered rows onto the leading principal directions.
///
/// Each loading vector is signed so that its largest-magnitude entry is positive.
pub fn pca_project(z: &DMatrix<f64>, n_components: usize) -> Result<Pca, RelError> {
    let (n, k) = z.shape();
    if n_components == 0 || n <= n_components || k < n_components {
        return Err(RelError::Shape(format!(
            "{n_components} components need more than {n_components} rows and at least {n_components} features, got {n}x{k}"
        )));
    }
    let c = center_cols(z);
    let svd = c.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let s = &svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let total: f64 = s.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return Err(RelError::DegenerateInput("all rows are identical".into()));
    }
    let mut components = DMatrix::zeros(k, n_components);
    let mut explained = Vec::with_capacity(n_components);
    for (out, &i) in order.iter().take(n_components).enumerate() {
        let mut v = vt.row(i).transpose();
        let lead = v
            .iter()
            .copied()
            .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if lead < 0.0 {
            v = -v;
        }
        components.set_column(out, &v);
        explained.push(s[i] * s[i] / total);
    }
    Ok(Pca {
        coords: c * &components,
        components,
        explained,
    })
}
