//! Similarity metrics over observable properties.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{KernelError, ObservableProperty, PopulationStats, SimilarityScore};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimilarityError {
    #[error("metric {metric:?} cannot compare {a} with {b}")]
    KindMismatch {
        metric: MetricKind,
        a: &'static str,
        b: &'static str,
    },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("covariance has eigenvalue {0:e} below -1e-8")]
    NonPsdCovariance(f64),
    #[error("metric scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// `-||a - b||` over parameter vectors.
    NegParamDistance,
    /// `-W2` between moment-matched Gaussians of two populations.
    GaussianW2,
    /// `exp(-||a - b||^2 / (2 scale^2))` over parameter vectors.
    RbfParam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimilarityMetric {
    kind: MetricKind,
    scale: f64,
}

impl SimilarityMetric {
    pub fn new(kind: MetricKind, scale: f64) -> Result<Self, SimilarityError> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(SimilarityError::InvalidScale(scale));
        }
        Ok(Self { kind, scale })
    }

    pub fn neg_param_distance() -> Self {
        Self {
            kind: MetricKind::NegParamDistance,
            scale: 1.0,
        }
    }

    pub fn gaussian_w2() -> Self {
        Self {
            kind: MetricKind::GaussianW2,
            scale: 1.0,
        }
    }

    pub fn rbf(scale: f64) -> Result<Self, SimilarityError> {
        Self::new(MetricKind::RbfParam, scale)
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Largest value the metric can return (self-similarity).
    pub fn maximum(&self) -> f64 {
        match self.kind {
            MetricKind::NegParamDistance | MetricKind::GaussianW2 => 0.0,
            MetricKind::RbfParam => 1.0,
        }
    }

    pub fn measure(
        &self,
        a: &ObservableProperty,
        b: &ObservableProperty,
    ) -> Result<SimilarityScore, SimilarityError> {
        measure(self, a, b)
    }
}

/// Sum of squared coordinate differences, accumulated in index order.
///
/// Shared with the synthetic objectives so that similarity and usefulness of
/// the same displacement round identically.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn measure(
    metric: &SimilarityMetric,
    a: &ObservableProperty,
    b: &ObservableProperty,
) -> Result<SimilarityScore, SimilarityError> {
    use ObservableProperty::*;
    let mismatch = || SimilarityError::KindMismatch {
        metric: metric.kind,
        a: a.kind_name(),
        b: b.kind_name(),
    };
    if a.dim() != b.dim() {
        return Err(SimilarityError::DimensionMismatch(a.dim(), b.dim()));
    }
    let value = match (metric.kind, a, b) {
        (MetricKind::NegParamDistance, ParamVector(x), ParamVector(y)) => {
            -squared_distance(x, y).sqrt()
        }
        (MetricKind::RbfParam, ParamVector(x), ParamVector(y)) => {
            (-squared_distance(x, y) / (2.0 * metric.scale * metric.scale)).exp()
        }
        (MetricKind::GaussianW2, PopulationStats(x), PopulationStats(y)) => {
            -gaussian_w2_distance(x, y)?
        }
        _ => return Err(mismatch()),
    };
    Ok(SimilarityScore::new(value)?)
}

fn lexicographic(a: &PopulationStats, b: &PopulationStats) -> Ordering {
    a.mean()
        .iter()
        .chain(a.covariance().iter())
        .zip(b.mean().iter().chain(b.covariance().iter()))
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Square root of a symmetric PSD matrix through its eigendecomposition.
/// Eigenvalues in `[-1e-8, 0)` are floored to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>, SimilarityError> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < -1e-8 {
            return Err(SimilarityError::NonPsdCovariance(*v));
        }
        *v = v.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    let r = q * DMatrix::from_diagonal(&roots) * q.transpose();
    Ok((&r + r.transpose()) * 0.5)
}

/// 2-Wasserstein distance between `N(mu_a, cov_a)` and `N(mu_b, cov_b)`.
pub fn gaussian_w2_distance(
    a: &PopulationStats,
    b: &PopulationStats,
) -> Result<f64, SimilarityError> {
    if a == b {
        return Ok(0.0);
    }
    // canonical argument order makes the result exactly symmetric
    let (a, b) = match lexicographic(a, b) {
        Ordering::Greater => (b, a),
        _ => (a, b),
    };
    let mean_term = squared_distance(a.mean().as_slice(), b.mean().as_slice());
    let sqrt_b = psd_sqrt(b.covariance())?;
    // validates the PSD property of the other covariance as well
    psd_sqrt(a.covariance())?;
    let cross = &sqrt_b * a.covariance() * &sqrt_b;
    let cross_sqrt = psd_sqrt(&cross)?;
    let trace = (a.covariance() + b.covariance() - cross_sqrt * 2.0).trace();
    Ok((mean_term + trace).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ObservableProperty {
        ObservableProperty::ParamVector(v.to_vec())
    }

    fn gauss(mean: &[f64], cov: DMatrix<f64>) -> ObservableProperty {
        ObservableProperty::PopulationStats(
            PopulationStats::new(DVector::from_column_slice(mean), cov, 100).unwrap(),
        )
    }

    /// Matrix square root by Denman-Beavers iteration, independent of the
    /// eigendecomposition route.
    fn sqrtm_oracle(m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = m.clone();
        let mut z = DMatrix::identity(m.nrows(), m.ncols());
        for _ in 0..100 {
            let yi = y.clone().try_inverse().unwrap();
            let zi = z.clone().try_inverse().unwrap();
            let ny = (&y + zi) * 0.5;
            let nz = (&z + yi) * 0.5;
            y = ny;
            z = nz;
        }
        y
    }

    #[test]
    fn self_similarity_is_maximal() {
        let m = SimilarityMetric::neg_param_distance();
        assert_eq!(m.measure(&pv(&[1.0, 2.0]), &pv(&[1.0, 2.0])).unwrap().value(), 0.0);
        let r = SimilarityMetric::rbf(0.7).unwrap();
        assert_eq!(r.measure(&pv(&[1.0, 2.0]), &pv(&[1.0, 2.0])).unwrap().value(), 1.0);
        let g = gauss(&[1.0, 0.0], DMatrix::identity(2, 2) * 3.0);
        assert_eq!(SimilarityMetric::gaussian_w2().measure(&g, &g).unwrap().value(), 0.0);
    }

    #[test]
    fn three_four_five() {
        let m = SimilarityMetric::neg_param_distance();
        assert_eq!(m.measure(&pv(&[0.0, 0.0]), &pv(&[3.0, 4.0])).unwrap().value(), -5.0);
    }

    #[test]
    fn w2_commuting_covariances() {
        let a = gauss(&[0.0, 0.0], DMatrix::identity(2, 2));
        let b = gauss(&[1.0, 0.0], DMatrix::identity(2, 2) * 4.0);
        let got = SimilarityMetric::gaussian_w2().measure(&a, &b).unwrap().value();
        assert!((got + 3.0_f64.sqrt()).abs() < 1e-12, "{got}");

        // oracle route: Denman-Beavers square roots in the same formula
        let (ca, cb) = (DMatrix::<f64>::identity(2, 2), DMatrix::<f64>::identity(2, 2) * 4.0);
        let sb = sqrtm_oracle(&cb);
        let inner = sqrtm_oracle(&(&sb * &ca * &sb));
        let w2 = (1.0 + (&ca + &cb - inner * 2.0).trace()).sqrt();
        assert!((got + w2).abs() < 1e-10);
    }

    #[test]
    fn w2_non_commuting_matches_oracle() {
        let ca = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let cb = DMatrix::from_row_slice(2, 2, &[0.5, -0.2, -0.2, 3.0]);
        let a = gauss(&[0.3, -1.0], ca.clone());
        let b = gauss(&[-0.7, 2.0], cb.clone());
        let got = -SimilarityMetric::gaussian_w2().measure(&a, &b).unwrap().value();
        let sb = sqrtm_oracle(&cb);
        let inner = sqrtm_oracle(&(&sb * &ca * &sb));
        let expect = (1.0 + 9.0 + (&ca + &cb - inner * 2.0).trace()).sqrt();
        assert!((got - expect).abs() < 1e-10, "{got} vs {expect}");
    }

    #[test]
    fn errors() {
        let m = SimilarityMetric::neg_param_distance();
        let g = gauss(&[0.0, 0.0], DMatrix::identity(2, 2));
        assert!(matches!(
            m.measure(&pv(&[0.0, 0.0]), &g),
            Err(SimilarityError::KindMismatch { .. })
        ));
        assert!(matches!(
            m.measure(&pv(&[0.0]), &pv(&[0.0, 1.0])),
            Err(SimilarityError::DimensionMismatch(1, 2))
        ));
        let bad = gauss(&[0.0, 0.0], DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]));
        assert!(matches!(
            SimilarityMetric::gaussian_w2().measure(&bad, &g),
            Err(SimilarityError::NonPsdCovariance(_))
        ));
        let nearly = gauss(&[0.0, 0.0], DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-10]));
        assert!(SimilarityMetric::gaussian_w2().measure(&nearly, &g).is_ok());
        assert!(SimilarityMetric::rbf(0.0).is_err());
    }

    fn arb_cov(d: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-2.0f64..2.0, d * d).prop_map(move |v| {
            let l = DMatrix::from_row_slice(d, d, &v);
            &l * l.transpose() + DMatrix::identity(d, d) * 1e-3
        })
    }

    proptest! {
        #[test]
        fn param_metrics_symmetric_and_self_maximal(
            a in proptest::collection::vec(-10.0f64..10.0, 3),
            b in proptest::collection::vec(-10.0f64..10.0, 3),
            scale in 0.1f64..5.0,
        ) {
            for m in [SimilarityMetric::neg_param_distance(), SimilarityMetric::rbf(scale).unwrap()] {
                let ab = m.measure(&pv(&a), &pv(&b)).unwrap();
                let ba = m.measure(&pv(&b), &pv(&a)).unwrap();
                prop_assert_eq!(ab, ba);
                let aa = m.measure(&pv(&a), &pv(&a)).unwrap();
                prop_assert!(aa >= ab);
                prop_assert_eq!(aa.value(), m.maximum());
            }
        }

        #[test]
        fn w2_symmetric_and_self_maximal(
            ma in proptest::collection::vec(-3.0f64..3.0, 2),
            mb in proptest::collection::vec(-3.0f64..3.0, 2),
            ca in arb_cov(2),
            cb in arb_cov(2),
        ) {
            let m = SimilarityMetric::gaussian_w2();
            let a = gauss(&ma, ca);
            let b = gauss(&mb, cb);
            let ab = m.measure(&a, &b).unwrap();
            prop_assert_eq!(ab, m.measure(&b, &a).unwrap());
            prop_assert!(m.measure(&a, &a).unwrap() >= ab);
        }

        #[test]
        fn w2_orders_pure_mean_shifts_like_param_distance(
            means in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 2), 2..8),
            cov in arb_cov(2),
        ) {
            let target = [0.0, 0.0];
            let w2 = SimilarityMetric::gaussian_w2();
            let np = SimilarityMetric::neg_param_distance();
            let gt = gauss(&target, cov.clone());
            let mut by_w2: Vec<(f64, usize)> = means.iter().enumerate()
                .map(|(i, mu)| (w2.measure(&gauss(mu, cov.clone()), &gt).unwrap().value(), i)).collect();
            let mut by_np: Vec<(f64, usize)> = means.iter().enumerate()
                .map(|(i, mu)| (np.measure(&pv(mu), &pv(&target)).unwrap().value(), i)).collect();
            by_w2.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            by_np.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            // compare orderings where values are separated beyond rounding
            for w in by_np.windows(2) {
                if (w[1].0 - w[0].0).abs() > 1e-9 {
                    let pos = |i| by_w2.iter().position(|e| e.1 == i).unwrap();
                    prop_assert!(pos(w[0].1) < pos(w[1].1));
                }
            }
        }

        #[test]
        fn invariant_under_coordinate_permutation(
            a in proptest::collection::vec(-10.0f64..10.0, 4),
            b in proptest::collection::vec(-10.0f64..10.0, 4),
            perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
        ) {
            let pa: Vec<f64> = perm.iter().map(|&i| a[i]).collect();
            let pb: Vec<f64> = perm.iter().map(|&i| b[i]).collect();
            for m in [SimilarityMetric::neg_param_distance(), SimilarityMetric::rbf(1.3).unwrap()] {
                let x = m.measure(&pv(&a), &pv(&b)).unwrap().value();
                let y = m.measure(&pv(&pa), &pv(&pb)).unwrap().value();
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }
}
