//! Clamped cubic B-spline paths over joint space.
//!
//! The knot vector is uniform on [0, 1] with degree+1 repeats at both ends,
//! and the first and last four control points are pinned to the path
//! endpoints, so the curve interpolates them exactly with zero first and
//! second parameter derivatives there.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Spline degree; fixed.
pub const DEGREE: usize = 3;

/// Number of control points pinned at each end.
pub const PINNED: usize = DEGREE + 1;

/// Clamped uniform knot vector for `n_c` control points.
pub fn clamped_knots(n_c: usize) -> Vec<f64> {
    let spans = (n_c - DEGREE) as f64;
    let mut knots = Vec::with_capacity(n_c + DEGREE + 1);
    knots.extend(std::iter::repeat(0.0).take(PINNED));
    for i in 1..n_c.saturating_sub(PINNED) + 1 {
        if i < n_c - DEGREE {
            knots.push(i as f64 / spans);
        }
    }
    knots.extend(std::iter::repeat(1.0).take(PINNED));
    knots
}

#[derive(Debug, Clone)]
pub struct BSplinePath {
    control_points: Vec<DVector<f64>>,
    knots: Vec<f64>,
}

impl BSplinePath {
    /// Validates the pinned-endpoint layout: at least 8 control points, the
    /// first four all equal, the last four all equal, consistent dimensions.
    pub fn new(control_points: Vec<DVector<f64>>) -> Result<Self> {
        let n_c = control_points.len();
        if n_c < 2 * PINNED {
            return Err(Error::contract(format!(
                "spline needs at least {} control points, got {n_c}",
                2 * PINNED
            )));
        }
        let dim = control_points[0].len();
        if control_points.iter().any(|p| p.len() != dim) {
            return Err(Error::contract(
                "control points have inconsistent dimensions".to_string(),
            ));
        }
        for i in 1..PINNED {
            if control_points[i] != control_points[0]
                || control_points[n_c - 1 - i] != control_points[n_c - 1]
            {
                return Err(Error::contract(
                    "first and last four control points must each be equal".to_string(),
                ));
            }
        }
        let knots = clamped_knots(n_c);
        Ok(BSplinePath {
            control_points,
            knots,
        })
    }

    /// Builds the pinned spline from endpoints plus the free interior rows.
    pub fn from_interior(
        start: &DVector<f64>,
        end: &DVector<f64>,
        interior: &[DVector<f64>],
    ) -> Result<Self> {
        let mut pts = Vec::with_capacity(2 * PINNED + interior.len());
        pts.extend(std::iter::repeat(start.clone()).take(PINNED));
        pts.extend(interior.iter().cloned());
        pts.extend(std::iter::repeat(end.clone()).take(PINNED));
        Self::new(pts)
    }

    pub fn num_control_points(&self) -> usize {
        self.control_points.len()
    }

    /// Free (unpinned) control-point count.
    pub fn interior_count(&self) -> usize {
        self.control_points.len() - 2 * PINNED
    }

    pub fn dim(&self) -> usize {
        self.control_points[0].len()
    }

    pub fn start(&self) -> &DVector<f64> {
        &self.control_points[0]
    }

    pub fn end(&self) -> &DVector<f64> {
        self.control_points.last().unwrap()
    }

    pub fn control_points(&self) -> &[DVector<f64>] {
        &self.control_points
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    fn check_param(s: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::contract(format!(
                "spline parameter {s} outside [0, 1]"
            )));
        }
        Ok(())
    }

    /// Curve point by de Boor's algorithm.
    pub fn eval(&self, s: f64) -> Result<DVector<f64>> {
        Self::check_param(s)?;
        Ok(de_boor(&self.control_points, &self.knots, DEGREE, s))
    }

    /// First derivative with respect to the path parameter.
    pub fn eval_derivative(&self, s: f64) -> Result<DVector<f64>> {
        Self::check_param(s)?;
        let n_c = self.control_points.len();
        let p = DEGREE as f64;
        let mut derivative_points = Vec::with_capacity(n_c - 1);
        for i in 0..n_c - 1 {
            let denom = self.knots[i + DEGREE + 1] - self.knots[i + 1];
            let d = if denom.abs() < 1e-15 {
                DVector::zeros(self.dim())
            } else {
                (&self.control_points[i + 1] - &self.control_points[i]) * (p / denom)
            };
            derivative_points.push(d);
        }
        let derivative_knots = &self.knots[1..self.knots.len() - 1];
        Ok(de_boor(
            &derivative_points,
            derivative_knots,
            DEGREE - 1,
            s,
        ))
    }
}

/// Iterative de Boor evaluation for an arbitrary degree.
fn de_boor(points: &[DVector<f64>], knots: &[f64], degree: usize, s: f64) -> DVector<f64> {
    let n_c = points.len();
    // Largest knot span [knots[k], knots[k+1]) containing s, clamped so the
    // parameter 1.0 lands in the final nonempty span.
    let mut k = match knots.partition_point(|&t| t <= s) {
        0 => degree,
        idx => idx - 1,
    };
    k = k.clamp(degree, n_c - 1);

    let mut d: Vec<DVector<f64>> = (0..=degree)
        .map(|j| points[j + k - degree].clone())
        .collect();
    for r in 1..=degree {
        for j in (r..=degree).rev() {
            let num = s - knots[j + k - degree];
            let den = knots[j + 1 + k - r] - knots[j + k - degree];
            let alpha = if den.abs() < 1e-15 { 0.0 } else { num / den };
            d[j] = &d[j - 1] * (1.0 - alpha) + &d[j] * alpha;
        }
    }
    d[degree].clone()
}

/// Control points for the straight-line initial guess: four pinned rows at
/// each end, interior rows evenly spaced along the segment.
pub fn initial_control_points(
    start: &DVector<f64>,
    end: &DVector<f64>,
    n_c: usize,
) -> Result<Vec<DVector<f64>>> {
    if n_c < 2 * PINNED {
        return Err(Error::contract(format!(
            "need at least {} control points, got {n_c}",
            2 * PINNED
        )));
    }
    if start.len() != end.len() {
        return Err(Error::contract(
            "endpoint dimensions disagree".to_string(),
        ));
    }
    let interior = n_c - 2 * PINNED;
    let mut pts = Vec::with_capacity(n_c);
    pts.extend(std::iter::repeat(start.clone()).take(PINNED));
    for j in 1..=interior {
        let f = j as f64 / (interior + 1) as f64;
        pts.push(start * (1.0 - f) + end * f);
    }
    pts.extend(std::iter::repeat(end.clone()).take(PINNED));
    Ok(pts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec1(x: f64) -> DVector<f64> {
        DVector::from_vec(vec![x])
    }

    #[test]
    fn knot_vector_is_clamped_uniform() {
        let knots = clamped_knots(12);
        assert_eq!(knots.len(), 16);
        assert_eq!(&knots[0..4], &[0.0; 4]);
        assert_eq!(&knots[12..16], &[1.0; 4]);
        for (i, &t) in knots[4..12].iter().enumerate() {
            assert!((t - (i + 1) as f64 / 9.0).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_control_polygon_gives_constant_curve() {
        let c = DVector::from_vec(vec![1.5, -0.3]);
        let path = BSplinePath::new(vec![c.clone(); 10]).unwrap();
        for s in [0.0, 0.17, 0.5, 0.93, 1.0] {
            assert!((path.eval(s).unwrap() - &c).norm() < 1e-14);
        }
    }

    #[test]
    fn endpoints_interpolate_exactly() {
        let start = DVector::from_vec(vec![0.0, 1.0]);
        let end = DVector::from_vec(vec![2.0, -1.0]);
        let interior = vec![
            DVector::from_vec(vec![0.4, 0.9]),
            DVector::from_vec(vec![1.1, -0.2]),
            DVector::from_vec(vec![1.8, -0.9]),
        ];
        let path = BSplinePath::from_interior(&start, &end, &interior).unwrap();
        assert_eq!(path.eval(0.0).unwrap(), start);
        assert_eq!(path.eval(1.0).unwrap(), end);
        // Pinned endpoints also zero the parameter velocity there.
        assert!(path.eval_derivative(0.0).unwrap().norm() < 1e-13);
        assert!(path.eval_derivative(1.0).unwrap().norm() < 1e-13);
    }

    #[test]
    fn interior_rows_space_evenly() {
        let pts = initial_control_points(&vec1(0.0), &vec1(1.0), 12).unwrap();
        let interior: Vec<f64> = pts[4..8].iter().map(|p| p[0]).collect();
        for (got, want) in interior.iter().zip([0.2, 0.4, 0.6, 0.8]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_endpoints_collapse_the_polygon() {
        let pts = initial_control_points(&vec1(0.7), &vec1(0.7), 10).unwrap();
        assert!(pts.iter().all(|p| (p[0] - 0.7).abs() < 1e-15));
    }

    #[test]
    fn minimal_spline_has_no_interior_points() {
        let pts = initial_control_points(&vec1(0.0), &vec1(1.0), 8).unwrap();
        let path = BSplinePath::new(pts).unwrap();
        assert_eq!(path.interior_count(), 0);
        assert_eq!(path.eval(0.0).unwrap()[0], 0.0);
        assert_eq!(path.eval(1.0).unwrap()[0], 1.0);
    }

    #[test]
    fn out_of_range_parameter_is_rejected() {
        let path = BSplinePath::new(vec![vec1(0.0); 8]).unwrap();
        assert!(path.eval(-0.01).is_err());
        assert!(path.eval(1.01).is_err());
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let start = DVector::from_vec(vec![0.0]);
        let end = DVector::from_vec(vec![1.0]);
        let interior = vec![vec1(0.05), vec1(0.9), vec1(0.3), vec1(0.65)];
        let path = BSplinePath::from_interior(&start, &end, &interior).unwrap();
        let h = 1e-7;
        for s in [0.11, 0.37, 0.5, 0.82] {
            let fd = (path.eval(s + h).unwrap() - path.eval(s - h).unwrap()) / (2.0 * h);
            let an = path.eval_derivative(s).unwrap();
            assert!((fd - an).norm() < 1e-6);
        }
    }
}
