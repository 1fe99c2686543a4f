//! Two-component PCA by power iteration with deflation, plus the Pearson
//! correlation of projected coordinates against action values.

use crate::error::{Error, Result};

/// Top-2 principal decomposition of a feature matrix.
#[derive(Debug, Clone)]
pub struct Pca2d {
    /// Mean-centered rows projected onto the two components.
    pub projected: Vec<[f64; 2]>,
    /// Unit-norm, mutually orthogonal component vectors.
    pub components: [Vec<f64>; 2],
    /// Sample variances along each component, descending.
    pub explained: [f64; 2],
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// Leading eigenvector of a symmetric PSD matrix by power iteration.
/// Starts from the largest-norm row (guaranteed unoriented overlap with
/// the top eigenspace); on an eigenvalue tie any vector in the tied
/// subspace is an equally valid component, so slow tie convergence is
/// acceptable rather than an error.
fn leading_eigenvector(m: &[Vec<f64>]) -> Option<(Vec<f64>, f64)> {
    let start = m.iter().max_by(|a, b| norm(a).total_cmp(&norm(b)))?;
    let n0 = norm(start);
    if n0 < 1e-300 {
        return None;
    }
    let mut v: Vec<f64> = start.iter().map(|x| x / n0).collect();
    for _ in 0..10_000 {
        let next = mat_vec(m, &v);
        let len = norm(&next);
        if len < 1e-300 {
            return None;
        }
        let next: Vec<f64> = next.iter().map(|x| x / len).collect();
        // Convergence up to sign.
        let dot: f64 = next.iter().zip(&v).map(|(a, b)| a * b).sum();
        let done = (1.0 - dot.abs()) < 1e-14;
        v = next;
        if done {
            break;
        }
    }
    let mv = mat_vec(m, &v);
    let lambda: f64 = v.iter().zip(&mv).map(|(a, b)| a * b).sum();
    Some((v, lambda.max(0.0)))
}

/// Top-2 PCA of `features` (rows = samples).
///
/// Components come from iterated eigenvector extraction with deflation on
/// the sample covariance; the second component is re-orthogonalized
/// against the first, so the pair is orthonormal to working precision.
pub fn pca_2d(features: &[Vec<f64>]) -> Result<Pca2d> {
    let n = features.len();
    if n < 2 {
        return Err(Error::DegenerateInput(format!("pca needs >= 2 rows, got {n}")));
    }
    let dim = features[0].len();
    if dim == 0 || features.iter().any(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch("ragged or empty feature rows".into()));
    }
    if features.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("feature matrix".into()));
    }

    let mut mean = vec![0.0; dim];
    for row in features {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x / n as f64;
        }
    }
    let centered: Vec<Vec<f64>> = features
        .iter()
        .map(|row| row.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();

    // Sample covariance.
    let mut cov = vec![vec![0.0; dim]; dim];
    for row in &centered {
        for (i, &xi) in row.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (j, &xj) in row.iter().enumerate() {
                cov[i][j] += xi * xj / (n - 1) as f64;
            }
        }
    }

    let (c1, l1) = leading_eigenvector(&cov)
        .ok_or_else(|| Error::DegenerateInput("all feature rows are identical".into()))?;
    if l1 <= 0.0 {
        return Err(Error::DegenerateInput("feature matrix has zero variance".into()));
    }

    // Deflate and extract the runner-up.
    for (i, row) in cov.iter_mut().enumerate() {
        for (j, c) in row.iter_mut().enumerate() {
            *c -= l1 * c1[i] * c1[j];
        }
    }
    let (c2, l2) = match leading_eigenvector(&cov) {
        Some((mut v, lambda)) => {
            // Re-orthogonalize against c1; deflation already gets close,
            // this pins the orthonormality tolerance.
            let dot: f64 = v.iter().zip(&c1).map(|(a, b)| a * b).sum();
            for (x, b) in v.iter_mut().zip(&c1) {
                *x -= dot * b;
            }
            let len = norm(&v);
            if len < 1e-12 {
                (fallback_orthogonal(&c1), 0.0)
            } else {
                (v.iter().map(|x| x / len).collect(), lambda)
            }
        }
        None => (fallback_orthogonal(&c1), 0.0),
    };

    let projected = centered
        .iter()
        .map(|row| {
            [
                row.iter().zip(&c1).map(|(a, b)| a * b).sum(),
                row.iter().zip(&c2).map(|(a, b)| a * b).sum(),
            ]
        })
        .collect();
    Ok(Pca2d { projected, components: [c1, c2], explained: [l1, l2] })
}

/// Any unit vector orthogonal to `v` (used when the data is rank-1 and
/// the second component is otherwise unconstrained).
fn fallback_orthogonal(v: &[f64]) -> Vec<f64> {
    // Orthogonalize the basis vector least aligned with v.
    let k = v
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut e = vec![0.0; v.len()];
    e[k] = 1.0;
    for (x, b) in e.iter_mut().zip(v) {
        *x -= v[k] * b;
    }
    let len = norm(&e);
    e.iter().map(|x| x / len).collect()
}

/// Pearson correlation of each projected axis against the action values.
pub fn action_correlation(projected: &[[f64; 2]], actions: &[f64]) -> Result<(f64, f64)> {
    let n = projected.len();
    if n < 3 {
        return Err(Error::DegenerateInput(format!("correlation needs >= 3 samples, got {n}")));
    }
    if actions.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} projections vs {} actions",
            n,
            actions.len()
        )));
    }
    let r = |axis: usize| -> Result<f64> {
        let xs: Vec<f64> = projected.iter().map(|p| p[axis]).collect();
        pearson(&xs, actions)
    };
    Ok((r(0)?, r(1)?))
}

fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::UndefinedCorrelation(
            "zero variance in a correlation argument".into(),
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}
