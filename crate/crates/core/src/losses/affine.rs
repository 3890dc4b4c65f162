use nalgebra::{Matrix2, Matrix3, Matrix3x2, Point2, Vector2};

use crate::error::{Error, Result};

/// `x = A x_bar + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub a: Matrix2<f64>,
    pub b: Vector2<f64>,
}

impl AffineMap {
    pub fn identity() -> Self {
        Self {
            a: Matrix2::identity(),
            b: Vector2::zeros(),
        }
    }

    pub fn apply(&self, p: &Point2<f64>) -> Point2<f64> {
        Point2::from(self.a * p.coords + self.b)
    }

    pub fn apply_all(&self, pts: &[Point2<f64>]) -> Vec<Point2<f64>> {
        pts.iter().map(|p| self.apply(p)).collect()
    }

    /// Sum of squared residuals against `truth`.
    pub fn residual(&self, chart: &[Point2<f64>], truth: &[Point2<f64>]) -> f64 {
        chart.iter().zip(truth).map(|(c, t)| (self.apply(c) - t).norm_squared()).sum()
    }
}

/// Least-squares affine map from chart coordinates to true coordinates via
/// the normal equations in homogeneous coordinates.
pub fn affine_fit(chart: &[Point2<f64>], truth: &[Point2<f64>]) -> Result<AffineMap> {
    if chart.len() != truth.len() {
        return Err(Error::Dimension(format!("{} chart points vs {} true points", chart.len(), truth.len())));
    }
    if chart.len() < 3 {
        return Err(Error::RankDeficient);
    }
    // collinearity test on the centred chart scatter
    let n = chart.len() as f64;
    let mean = chart.iter().fold(Vector2::zeros(), |acc, p| acc + p.coords) / n;
    let cov = chart.iter().fold(Matrix2::zeros(), |acc, p| {
        let d = p.coords - mean;
        acc + d * d.transpose()
    });
    let tr = cov.trace();
    if !(tr > 0.0) || cov.determinant() <= 1e-12 * tr * tr {
        return Err(Error::RankDeficient);
    }
    let mut gram = Matrix3::zeros();
    let mut rhs = Matrix3x2::zeros();
    for (c, t) in chart.iter().zip(truth) {
        let z = nalgebra::Vector3::new(c.x, c.y, 1.0);
        gram += z * z.transpose();
        rhs += z * t.coords.transpose();
    }
    let theta = gram.cholesky().ok_or(Error::RankDeficient)?.solve(&rhs);
    // theta rows: coefficients of x_bar.x, x_bar.y, 1
    Ok(AffineMap {
        a: Matrix2::new(theta[(0, 0)], theta[(1, 0)], theta[(0, 1)], theta[(1, 1)]),
        b: Vector2::new(theta[(2, 0)], theta[(2, 1)]),
    })
}
