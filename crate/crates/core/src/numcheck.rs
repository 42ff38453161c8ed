//! Numerical oracles: central differences, Fréchet remainder diagnostics, a
//! classical counterexample where all directional derivatives exist (and are
//! linear) but the Fréchet derivative does not, and a second-derivative
//! norm-bound checker for compositions.
//!
//! All randomness flows from an explicit seed recorded in every report;
//! per-sample streams are split by counter so results do not depend on
//! evaluation order.

use crate::opcalc::poly::{composition_mixed_second, PolyMap};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::fmt;

#[derive(Clone, PartialEq, Debug)]
pub enum NumError {
    NonFiniteValue,
    NoConvergence,
    InvalidSequence(String),
}

impl fmt::Display for NumError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NumError::NonFiniteValue => write!(f, "non-finite value"),
            NumError::NoConvergence => write!(f, "iteration did not converge"),
            NumError::InvalidSequence(msg) => write!(f, "invalid sequence: {msg}"),
        }
    }
}

impl std::error::Error for NumError {}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

/// Structured result of one numerical check. Passes iff the relative error
/// is within tolerance (absolute error when the reference is zero).
#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub name: String,
    pub estimate: f64,
    pub reference: f64,
    pub abs_error: f64,
    pub rel_error: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub dims: Vec<usize>,
}

impl VerifyReport {
    pub fn compare(name: &str, estimate: f64, reference: f64, tolerance: f64, seed: u64) -> Self {
        let abs_error = (estimate - reference).abs();
        let rel_error = if reference != 0.0 {
            abs_error / reference.abs()
        } else {
            abs_error
        };
        let measured = if reference != 0.0 {
            rel_error
        } else {
            abs_error
        };
        let verdict = if measured <= tolerance && estimate.is_finite() {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        VerifyReport {
            name: name.to_string(),
            estimate,
            reference,
            abs_error,
            rel_error,
            tolerance,
            verdict,
            seed,
            h: None,
            dims: vec![],
        }
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = Some(h);
        self
    }

    pub fn with_dims(mut self, dims: &[usize]) -> Self {
        self.dims = dims.to_vec();
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// One JSON line per report.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Counter-based per-sample seed derivation: deterministic in `(seed, index)`
/// and independent of evaluation order.
pub fn stream_seed(seed: u64, index: u64) -> u64 {
    seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17)
}

/// Central-difference step for first-order checks.
pub fn fd_step_first(x_norm: f64) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + x_norm)
}

/// Larger step for nested second-order differences.
pub fn fd_step_second(x_norm: f64) -> f64 {
    f64::EPSILON.powf(0.25) * (1.0 + x_norm)
}

/// Central difference `(f(X + hZ) - f(X - hZ)) / (2h)` for matrix-valued `f`.
pub fn fd_directional<F>(
    f: F,
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    h: f64,
) -> Result<DMatrix<f64>, NumError>
where
    F: Fn(&DMatrix<f64>) -> Result<DMatrix<f64>, NumError>,
{
    let plus = f(&(x + z * h))?;
    let minus = f(&(x - z * h))?;
    let out = (plus - minus) / (2.0 * h);
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(NumError::NonFiniteValue)
    }
}

/// Scalar-valued convenience wrapper.
pub fn fd_directional_scalar<F>(
    f: F,
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    h: f64,
) -> Result<f64, NumError>
where
    F: Fn(&DMatrix<f64>) -> Result<f64, NumError>,
{
    let plus = f(&(x + z * h))?;
    let minus = f(&(x - z * h))?;
    let out = (plus - minus) / (2.0 * h);
    if out.is_finite() {
        Ok(out)
    } else {
        Err(NumError::NonFiniteValue)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CurveLabel {
    StraightLine,
    Curved,
    Custom,
}

/// A sequence of perturbations `z_n -> 0` with strictly decreasing norms.
#[derive(Clone, Debug)]
pub struct CurveSequence {
    pub label: CurveLabel,
    points: Vec<DMatrix<f64>>,
}

impl CurveSequence {
    pub fn from_points(points: Vec<DMatrix<f64>>, label: CurveLabel) -> Result<Self, NumError> {
        if points.is_empty() {
            return Err(NumError::InvalidSequence("empty sequence".to_string()));
        }
        for w in points.windows(2) {
            // NaN-safe strict decrease.
            if w[1].norm().partial_cmp(&w[0].norm()) != Some(std::cmp::Ordering::Less) {
                return Err(NumError::InvalidSequence(
                    "norms must be strictly decreasing".to_string(),
                ));
            }
        }
        Ok(CurveSequence { label, points })
    }

    /// `z_n = dir * t0 * ratio^n` for `n = 0..count`.
    pub fn straight_line(
        dir: &DMatrix<f64>,
        t0: f64,
        ratio: f64,
        count: usize,
    ) -> Result<Self, NumError> {
        if !(t0 > 0.0 && ratio > 0.0 && ratio < 1.0) || dir.norm() == 0.0 {
            return Err(NumError::InvalidSequence(
                "need t0 > 0, 0 < ratio < 1, dir != 0".to_string(),
            ));
        }
        let points = (0..count)
            .map(|n| dir * (t0 * ratio.powi(n as i32)))
            .collect();
        CurveSequence::from_points(points, CurveLabel::StraightLine)
    }

    /// The parabolic approach `(1/n, 2/n^2)` in the plane, `n = n0..=n_max`.
    pub fn parabola(n0: usize, n_max: usize) -> Result<Self, NumError> {
        if n0 < 1 || n_max <= n0 {
            return Err(NumError::InvalidSequence(
                "need 1 <= n0 < n_max".to_string(),
            ));
        }
        let points = (n0..=n_max)
            .map(|n| {
                let n = n as f64;
                DMatrix::from_column_slice(2, 1, &[1.0 / n, 2.0 / (n * n)])
            })
            .collect();
        CurveSequence::from_points(points, CurveLabel::Curved)
    }

    pub fn points(&self) -> &[DMatrix<f64>] {
        &self.points
    }
}

/// Remainder ratios `||f(x + z_n) - f(x) - A(z_n)|| / ||z_n||` along a
/// sequence, for a candidate linear map `A`.
pub fn frechet_remainder<F, A>(
    f: F,
    candidate: A,
    x: &DMatrix<f64>,
    seq: &CurveSequence,
) -> Result<Vec<f64>, NumError>
where
    F: Fn(&DMatrix<f64>) -> Result<DMatrix<f64>, NumError>,
    A: Fn(&DMatrix<f64>) -> Result<DMatrix<f64>, NumError>,
{
    let f0 = f(x)?;
    let mut out = Vec::with_capacity(seq.points.len());
    for z in &seq.points {
        let ratio = (f(&(x + z))? - &f0 - candidate(z)?).norm() / z.norm();
        if !ratio.is_finite() {
            return Err(NumError::NonFiniteValue);
        }
        out.push(ratio);
    }
    Ok(out)
}

/// Smooth bump: zero outside (1, 3), equal to 1 at s = 2.
pub fn bump(s: f64) -> f64 {
    let u = s - 2.0;
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

/// `f(x, y) = x * bump(y / x^2)` for `x != 0`, else 0: continuous, with all
/// directional derivatives at the origin zero, yet not Fréchet
/// differentiable there.
pub fn counterexample_f(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * bump(y / (x * x))
    }
}

/// Demonstration bundle: directional derivatives vanish along random rays,
/// while the remainder ratio along `(1/n, 2/n^2)` tends to 1.
pub fn counterexample_demo(n_max: usize, seed: u64) -> Result<Vec<VerifyReport>, NumError> {
    if n_max < 10 {
        return Err(NumError::InvalidSequence("need n_max >= 10".to_string()));
    }
    let mut reports = Vec::new();

    // (i) directional derivatives at the origin along random rays.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = 1e-4;
    let mut max_est: f64 = 0.0;
    for _ in 0..32 {
        let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let (a, b) = (ang.cos(), ang.sin());
        let est = (counterexample_f(t * a, t * b) - counterexample_f(0.0, 0.0)) / t;
        max_est = max_est.max(est.abs());
    }
    reports.push(VerifyReport::compare("ray_directional_max", max_est, 0.0, 1e-12, seed).with_h(t));

    // (ii) remainder ratio along the parabolic sequence, candidate derivative 0.
    let seq = CurveSequence::parabola(1, n_max)?;
    let origin = DMatrix::zeros(2, 1);
    let eval = |p: &DMatrix<f64>| -> Result<DMatrix<f64>, NumError> {
        Ok(DMatrix::from_element(
            1,
            1,
            counterexample_f(p[(0, 0)], p[(1, 0)]),
        ))
    };
    let zero_map =
        |_: &DMatrix<f64>| -> Result<DMatrix<f64>, NumError> { Ok(DMatrix::zeros(1, 1)) };
    let ratios = frechet_remainder(eval, zero_map, &origin, &seq)?;
    let mut max_dev: f64 = 0.0;
    for (idx, ratio) in ratios.iter().enumerate() {
        let n = (idx + 1) as f64;
        let analytic = 1.0 / (1.0 + 4.0 / (n * n)).sqrt();
        max_dev = max_dev.max((ratio - analytic).abs());
    }
    reports.push(VerifyReport::compare(
        "curve_remainder_analytic_dev",
        max_dev,
        0.0,
        1e-12,
        seed,
    ));
    let final_ratio = *ratios.last().expect("non-empty");
    reports.push(VerifyReport::compare(
        "curve_remainder_final",
        final_ratio,
        1.0,
        5.0 / (n_max as f64).sqrt(),
        seed,
    ));

    // (iii) continuity spot checks on sequences approaching the y-axis.
    let mut violation: f64 = 0.0;
    for y in [0.0, 1.0, 2.0] {
        for n in 1..=40 {
            let x = 0.5_f64.powi(n);
            violation = violation.max(counterexample_f(x, y).abs() - x.abs());
        }
    }
    reports.push(VerifyReport::compare(
        "continuity_bound",
        violation.max(0.0),
        0.0,
        0.0,
        seed,
    ));

    // Summary: directional derivatives all zero (hence a Gâteaux derivative
    // exists and is the zero map) while the remainder ratio stays near 1.
    let conclusion = max_est < 1e-12 && (final_ratio - 1.0).abs() < 5.0 / (n_max as f64).sqrt();
    reports.push(VerifyReport::compare(
        "gateaux_zero_but_not_frechet",
        if conclusion { 1.0 } else { 0.0 },
        1.0,
        0.0,
        seed,
    ));
    Ok(reports)
}

/// Largest singular value by power iteration on `MᵀM` (tolerance 1e-10, at
/// most 10 000 iterations).
pub fn spectral_norm(m: &DMatrix<f64>) -> Result<f64, NumError> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(NumError::NonFiniteValue);
    }
    let gram = m.transpose() * m;
    let n = gram.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 1e-3 * i as f64);
    v /= v.norm();
    let mut prev = f64::INFINITY;
    for _ in 0..10_000 {
        let w = &gram * &v;
        let lambda = v.dot(&w);
        let wn = w.norm();
        if wn < 1e-300 {
            return Ok(0.0);
        }
        v = w / wn;
        if (lambda - prev).abs() <= 1e-10 * lambda.abs().max(1.0) {
            return Ok(lambda.max(0.0).sqrt());
        }
        prev = lambda;
    }
    Err(NumError::NoConvergence)
}

/// Check the second-derivative norm bound for a composition: the sampled
/// bilinear norm of `D²(f∘g)(x)` (a lower bound) must not exceed
/// `‖D²f∘g‖ ‖Dg‖² + ‖Df∘g‖ ‖D²g‖` with each factor bounded above by the
/// spectral norm of its matricization. One-sided by construction, so the
/// check never fails spuriously.
pub fn bound_check(
    f: &PolyMap,
    g: &PolyMap,
    x: &DVector<f64>,
    n_samples: usize,
    seed: u64,
) -> Result<VerifyReport, NumError> {
    let gx = g.value(x);
    let dg = spectral_norm(&g.jacobian(x))?;
    let df = spectral_norm(&f.jacobian(&gx))?;
    let d2f = spectral_norm(&f.d2_matricized(&gx))?;
    let d2g = spectral_norm(&g.d2_matricized(x))?;
    let rhs = d2f * dg * dg + df * d2g;

    let mut lhs: f64 = 0.0;
    for i in 0..n_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64 + 1);
        let z = random_unit(&mut rng, g.in_dim);
        let t = random_unit(&mut rng, g.in_dim);
        let val = composition_mixed_second(f, g, x, &z, &t);
        if val.iter().any(|v| !v.is_finite()) {
            return Err(NumError::NonFiniteValue);
        }
        lhs = lhs.max(val.norm());
    }
    let verdict = if lhs <= rhs * (1.0 + 1e-9) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let rel = if rhs != 0.0 { lhs / rhs } else { lhs };
    Ok(VerifyReport {
        name: "composition_second_derivative_bound".to_string(),
        estimate: lhs,
        reference: rhs,
        abs_error: (rhs - lhs).max(0.0),
        rel_error: rel,
        tolerance: 1.0 + 1e-9,
        verdict,
        seed,
        h: None,
        dims: vec![g.in_dim, g.out_dim, f.out_dim],
    })
}

fn random_unit(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let norm = v.norm();
        if norm > 1e-6 {
            return v / norm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_properties() {
        assert_eq!(bump(2.0), 1.0);
        assert_eq!(bump(0.5), 0.0);
        assert_eq!(bump(1.0), 0.0);
        assert_eq!(bump(3.0), 0.0);
        assert_eq!(bump(3.7), 0.0);
        let interior = bump(1.5);
        assert!(interior > 0.0 && interior < 1.0);
    }

    #[test]
    fn counterexample_ridge_and_support() {
        let t = 0.1;
        assert!((counterexample_f(t, 2.0 * t * t) - t).abs() < 1e-15);
        assert_eq!(counterexample_f(0.0, 5.0), 0.0);
        assert_eq!(counterexample_f(0.1, 0.0001), 0.0); // y/x^2 = 0.01 < 1
    }

    #[test]
    fn ray_through_support_vanishes_for_small_t() {
        // Direction (1, 1): f(t, t) = t * bump(1/t) = 0 once 1/t >= 3.
        for t in [1e-4, 0.2, 0.33] {
            assert_eq!(counterexample_f(t, t), 0.0, "t = {t}");
        }
        assert!(counterexample_f(0.5, 0.5) > 0.0); // 1/t = 2 inside (1, 3)
    }

    #[test]
    fn fd_directional_basics() {
        let x = DMatrix::from_element(2, 2, 0.3);
        let z = DMatrix::from_element(2, 2, 0.5);
        let constant = |_: &DMatrix<f64>| Ok(DMatrix::from_element(1, 1, 7.0));
        let d = fd_directional(constant, &x, &z, 1e-3).unwrap();
        assert!(d.norm() < 1e-12);
        let zero_dir = DMatrix::zeros(2, 2);
        let quad = |m: &DMatrix<f64>| Ok(DMatrix::from_element(1, 1, m.norm_squared()));
        let d = fd_directional(quad, &x, &zero_dir, 1e-3).unwrap();
        assert_eq!(d[(0, 0)], 0.0);
    }

    #[test]
    fn curve_sequences_validate_monotonicity() {
        let dir = DMatrix::from_element(2, 1, 1.0);
        assert!(CurveSequence::straight_line(&dir, 0.1, 0.5, 20).is_ok());
        assert!(CurveSequence::straight_line(&dir, 0.1, 1.5, 20).is_err());
        let bad = vec![
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 2.0),
        ];
        assert!(CurveSequence::from_points(bad, CurveLabel::Custom).is_err());
    }

    #[test]
    fn linear_function_has_zero_remainder() {
        let x = DMatrix::from_element(2, 1, 0.4);
        let a = DMatrix::from_row_slice(1, 2, &[2.0, -1.0]);
        let f = |p: &DMatrix<f64>| Ok(&a * p);
        let cand = |z: &DMatrix<f64>| Ok(&a * z);
        let dir = DMatrix::from_column_slice(2, 1, &[0.6, 0.8]);
        let seq = CurveSequence::straight_line(&dir, 0.1, 0.5, 12).unwrap();
        let ratios = frechet_remainder(f, cand, &x, &seq).unwrap();
        // Zero up to round-off amplified by the 1/||z|| division.
        assert!(ratios.iter().all(|r| *r < 1e-9), "{ratios:?}");
    }

    #[test]
    fn spectral_norm_basics() {
        assert!((spectral_norm(&DMatrix::identity(4, 4)).unwrap() - 1.0).abs() < 1e-10);
        let d = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        assert!((spectral_norm(&d).unwrap() - 3.0).abs() < 1e-9);
        assert_eq!(spectral_norm(&DMatrix::zeros(3, 3)).unwrap(), 0.0);
    }

    #[test]
    fn report_verdict_rules() {
        let pass = VerifyReport::compare("x", 1.0 + 1e-9, 1.0, 1e-6, 0);
        assert!(pass.passed());
        let fail = VerifyReport::compare("x", 1.01, 1.0, 1e-6, 0);
        assert!(!fail.passed());
        // Absolute rule when the reference is zero.
        let zero_ref = VerifyReport::compare("x", 1e-13, 0.0, 1e-12, 0);
        assert!(zero_ref.passed());
        let line = zero_ref.to_json_line();
        assert!(line.starts_with("{\"name\""));
        assert!(line.contains("\"verdict\":\"pass\""));
    }

    #[test]
    fn demo_validates_n_max() {
        assert!(counterexample_demo(5, 0).is_err());
    }
}
