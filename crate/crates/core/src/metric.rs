//! The PDE system: fast metric g(Ψ), inverse slow metric h⁻¹(Ψ, W), the six
//! semilinear coefficient functions, and runtime checks of the structural
//! assumptions the geometric machinery relies on.
//!
//! Index convention: 0 is time, 1 and 2 are the Cartesian space directions.
//! The slow array is W = (w, w0, w1, w2).

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, Matrix3, Vector3, Vector4};
use thiserror::Error;

use crate::rng::Rng;

pub type Mat3 = Matrix3<f64>;
pub type Vec3 = Vector3<f64>;
/// Slow-wave array (w, w0, w1, w2).
pub type Slow = Vector4<f64>;

/// Finite-difference step for G when no analytic derivative is supplied.
pub const FD_STEP_G: f64 = 1e-6;
/// Step for G′; second differences need a larger step than first differences.
pub const FD_STEP_GP: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("metric-model/eval_fast_metric: g is not Lorentzian at psi = {psi}")]
    NonLorentzian { psi: f64 },
    #[error(
        "metric-model/eval_slow_metric: speed ordering violated at psi = {psi}: \
         h^-1(omega, omega) = {value} for g-causal omega = {omega:?}"
    )]
    SpeedOrderViolation {
        psi: f64,
        omega: [f64; 3],
        value: f64,
    },
    #[error("metric-model/validate: {0}")]
    Structure(String),
}

type MetricFn = Arc<dyn Fn(f64) -> Mat3 + Send + Sync>;
type SlowMetricFn = Arc<dyn Fn(f64, &Slow) -> Mat3 + Send + Sync>;
type CoeffFn = Arc<dyn Fn(f64, &Slow) -> f64 + Send + Sync>;
type CoeffVecFn = Arc<dyn Fn(f64, &Slow) -> Vec3 + Send + Sync>;

/// The six semilinear coefficient functions of (Ψ, W).
///
/// Fast wave: □_g Ψ = 𝔐 Q + 𝔑₁^α ∂_αΨ + 𝔑₂.
/// Slow wave source: 𝔐̃ Q + Ñ₁^α ∂_αΨ + Ñ₂.
#[derive(Clone)]
pub struct Semilinear {
    pub name: String,
    pub m: CoeffFn,
    pub n1: CoeffVecFn,
    pub n2: CoeffFn,
    pub m_slow: CoeffFn,
    pub n1_slow: CoeffVecFn,
    pub n2_slow: CoeffFn,
}

impl fmt::Debug for Semilinear {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Semilinear").field("name", &self.name).finish()
    }
}

impl Semilinear {
    /// Default set. In plane symmetry with the model metric it reduces the
    /// fast equation to Lb = ab + w0 b + μ w0 Ψ and the slow source to
    /// μ S = ab + μ w0 Ψ.
    pub fn model() -> Self {
        Self {
            name: "model".into(),
            m: Arc::new(|_, _| 1.0),
            n1: Arc::new(|psi, w| Vec3::new(-w[1], w[1] / (1.0 + psi), 0.0)),
            n2: Arc::new(|psi, w| -w[1] * psi),
            m_slow: Arc::new(|_, _| 1.0),
            n1_slow: Arc::new(|_, _| Vec3::zeros()),
            n2_slow: Arc::new(|psi, w| -w[1] * psi),
        }
    }

    /// 𝔐 = 1, 𝔑₁ = w0 δ₀, 𝔑₂ = w Ψ, 𝔐̃ = 1, Ñ₁ = w0 δ₀, Ñ₂ = w.
    pub fn linear() -> Self {
        Self {
            name: "linear".into(),
            m: Arc::new(|_, _| 1.0),
            n1: Arc::new(|_, w| Vec3::new(w[1], 0.0, 0.0)),
            n2: Arc::new(|psi, w| w[0] * psi),
            m_slow: Arc::new(|_, _| 1.0),
            n1_slow: Arc::new(|_, w| Vec3::new(w[1], 0.0, 0.0)),
            n2_slow: Arc::new(|_, w| w[0]),
        }
    }

    /// No semilinear terms at all.
    pub fn none() -> Self {
        Self {
            name: "none".into(),
            m: Arc::new(|_, _| 0.0),
            n1: Arc::new(|_, _| Vec3::zeros()),
            n2: Arc::new(|_, _| 0.0),
            m_slow: Arc::new(|_, _| 0.0),
            n1_slow: Arc::new(|_, _| Vec3::zeros()),
            n2_slow: Arc::new(|_, _| 0.0),
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "model" => Some(Self::model()),
            "linear" => Some(Self::linear()),
            "none" => Some(Self::none()),
            _ => None,
        }
    }

    /// Replace 𝔐̃ by a constant.
    pub fn with_slow_null_coupling(mut self, c: f64) -> Self {
        self.m_slow = Arc::new(move |_, _| c);
        self
    }
}

/// g, g⁻¹, G = dg/dΨ and G′ = d²g/dΨ² at one value of Ψ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricEval {
    pub psi: f64,
    pub g: Mat3,
    pub ginv: Mat3,
    pub big_g: Mat3,
    pub big_gp: Mat3,
}

impl MetricEval {
    /// Spatial block g_ij.
    pub fn gbar(&self) -> Matrix2<f64> {
        Matrix2::new(self.g[(1, 1)], self.g[(1, 2)], self.g[(2, 1)], self.g[(2, 2)])
    }

    pub fn det_gbar(&self) -> f64 {
        self.g[(1, 1)] * self.g[(2, 2)] - self.g[(1, 2)] * self.g[(2, 1)]
    }

    /// Inverse of the spatial block (not the spatial block of g⁻¹).
    pub fn gbar_inv(&self) -> Matrix2<f64> {
        let d = self.det_gbar();
        Matrix2::new(
            self.g[(2, 2)] / d,
            -self.g[(1, 2)] / d,
            -self.g[(2, 1)] / d,
            self.g[(1, 1)] / d,
        )
    }

    /// g(V, W).
    pub fn dot(&self, v: &Vec3, w: &Vec3) -> f64 {
        (v.transpose() * self.g * w)[0]
    }

    /// G(V, W).
    pub fn big_g_dot(&self, v: &Vec3, w: &Vec3) -> f64 {
        (v.transpose() * self.big_g * w)[0]
    }
}

/// Fast metric, slow metric and semilinear sources.
#[derive(Clone)]
pub struct MetricModel {
    pub name: String,
    g_small: MetricFn,
    dg_small: Option<MetricFn>,
    d2g_small: Option<MetricFn>,
    h_inv: SlowMetricFn,
    pub semilinear: Semilinear,
}

impl fmt::Debug for MetricModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricModel")
            .field("name", &self.name)
            .field("semilinear", &self.semilinear)
            .finish()
    }
}

fn minkowski() -> Mat3 {
    Mat3::from_diagonal(&Vec3::new(-1.0, 1.0, 1.0))
}

/// Default inverse slow metric diag(−1, 1/4, 1/4).
pub fn default_h_inv() -> Mat3 {
    Mat3::from_diagonal(&Vec3::new(-1.0, 0.25, 0.25))
}

fn poly(c: &[f64], x: f64) -> f64 {
    // c[k] multiplies x^(k+1): no constant term.
    c.iter().rev().fold(0.0, |acc, &ck| (acc + ck) * x)
}

fn poly_d(c: &[f64], x: f64) -> f64 {
    c.iter()
        .enumerate()
        .rev()
        .fold(0.0, |acc, (k, &ck)| acc * x + (k as f64 + 1.0) * ck)
}

fn poly_d2(c: &[f64], x: f64) -> f64 {
    c.iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (k, &ck)| acc * x + (k as f64 + 1.0) * k as f64 * ck)
}

fn spatial_sym(a11: f64, a12: f64, a22: f64) -> Mat3 {
    Mat3::new(0.0, 0.0, 0.0, 0.0, a11, a12, 0.0, a12, a22)
}

impl MetricModel {
    /// General constructor from user callbacks.
    pub fn new(
        name: impl Into<String>,
        g_small: impl Fn(f64) -> Mat3 + Send + Sync + 'static,
        h_inv: impl Fn(f64, &Slow) -> Mat3 + Send + Sync + 'static,
        semilinear: Semilinear,
    ) -> Self {
        Self {
            name: name.into(),
            g_small: Arc::new(g_small),
            dg_small: None,
            d2g_small: None,
            h_inv: Arc::new(h_inv),
            semilinear,
        }
    }

    /// Supply analytic Ψ-derivatives of g^(Small).
    pub fn with_derivatives(
        mut self,
        dg: impl Fn(f64) -> Mat3 + Send + Sync + 'static,
        d2g: impl Fn(f64) -> Mat3 + Send + Sync + 'static,
    ) -> Self {
        self.dg_small = Some(Arc::new(dg));
        self.d2g_small = Some(Arc::new(d2g));
        self
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.dg_small.is_some()
    }

    /// g^(Small)_11 = (1+Ψ)² − 1, everything else zero; h⁻¹ = diag(−1, 1/4, 1/4).
    pub fn model_quadratic() -> Self {
        Self::new(
            "model-quadratic",
            |psi| spatial_sym((1.0 + psi) * (1.0 + psi) - 1.0, 0.0, 0.0),
            |_, _| default_h_inv(),
            Semilinear::model(),
        )
        .with_derivatives(
            |psi| spatial_sym(2.0 * (1.0 + psi), 0.0, 0.0),
            |_| spatial_sym(2.0, 0.0, 0.0),
        )
    }

    /// Spatial-block metric perturbation given by power series without
    /// constant term, g^(Small)_ij(Ψ) = Σ_k c_k Ψ^(k+1), and a constant inverse
    /// slow metric diag(−1, ·) with spatial block (h11, h12, h22).
    pub fn custom(g11: &[f64], g12: &[f64], g22: &[f64], h: [f64; 3], semilinear: Semilinear) -> Self {
        let (a, b, c) = (g11.to_vec(), g12.to_vec(), g22.to_vec());
        let (da, db, dc) = (a.clone(), b.clone(), c.clone());
        let (ea, eb, ec) = (a.clone(), b.clone(), c.clone());
        let h_inv = Mat3::new(-1.0, 0.0, 0.0, 0.0, h[0], h[1], 0.0, h[1], h[2]);
        Self::new(
            "custom",
            move |psi| spatial_sym(poly(&a, psi), poly(&b, psi), poly(&c, psi)),
            move |_, _| h_inv,
            semilinear,
        )
        .with_derivatives(
            move |psi| spatial_sym(poly_d(&da, psi), poly_d(&db, psi), poly_d(&dc, psi)),
            move |psi| spatial_sym(poly_d2(&ea, psi), poly_d2(&eb, psi), poly_d2(&ec, psi)),
        )
    }

    pub fn with_semilinear(mut self, semilinear: Semilinear) -> Self {
        self.semilinear = semilinear;
        self
    }

    pub fn g_small(&self, psi: f64) -> Mat3 {
        (self.g_small)(psi)
    }

    /// g = m + g^(Small), its inverse, G and G′.
    pub fn eval_fast_metric(&self, psi: f64) -> Result<MetricEval, MetricError> {
        let g = minkowski() + (self.g_small)(psi);
        let g11 = g[(1, 1)];
        let det_bar = g[(1, 1)] * g[(2, 2)] - g[(1, 2)] * g[(2, 1)];
        let det = g.determinant();
        if !(g11 > 0.0 && det_bar > 0.0 && det < 0.0) || !det.is_finite() {
            return Err(MetricError::NonLorentzian { psi });
        }
        let ginv = g.try_inverse().ok_or(MetricError::NonLorentzian { psi })?;
        let big_g = match &self.dg_small {
            Some(dg) => dg(psi),
            None => {
                let h = FD_STEP_G;
                ((self.g_small)(psi + h) - (self.g_small)(psi - h)) / (2.0 * h)
            }
        };
        let big_gp = match &self.d2g_small {
            Some(d2g) => d2g(psi),
            None => {
                let h = FD_STEP_GP;
                ((self.g_small)(psi + h) - 2.0 * (self.g_small)(psi) + (self.g_small)(psi - h)) / (h * h)
            }
        };
        Ok(MetricEval {
            psi,
            g,
            ginv,
            big_g,
            big_gp,
        })
    }

    /// g and G = dg/dΨ without inverting g; for inner loops.
    pub fn g_and_dg(&self, psi: f64) -> (Mat3, Mat3) {
        let g = minkowski() + (self.g_small)(psi);
        let dg = match &self.dg_small {
            Some(dg) => dg(psi),
            None => {
                let h = FD_STEP_G;
                ((self.g_small)(psi + h) - (self.g_small)(psi - h)) / (2.0 * h)
            }
        };
        (g, dg)
    }

    /// h⁻¹ without the speed-ordering check; for inner loops.
    pub fn h_inv(&self, psi: f64, w: &Slow) -> Mat3 {
        (self.h_inv)(psi, w)
    }

    /// h⁻¹ at (Ψ, W), checking that every g-null covector on a fixed angular
    /// sample, and dt itself, is h-timelike.
    pub fn eval_slow_metric(&self, psi: f64, w: &Slow) -> Result<Mat3, MetricError> {
        let hinv = (self.h_inv)(psi, w);
        let ge = self.eval_fast_metric(psi)?;
        let check = |omega: Vec3| -> Result<(), MetricError> {
            let value = (omega.transpose() * hinv * omega)[0];
            if value < 0.0 {
                Ok(())
            } else {
                Err(MetricError::SpeedOrderViolation {
                    psi,
                    omega: [omega[0], omega[1], omega[2]],
                    value,
                })
            }
        };
        check(Vec3::new(1.0, 0.0, 0.0))?;
        const N_ANGLES: usize = 32;
        for k in 0..N_ANGLES {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / N_ANGLES as f64;
            for omega in null_covectors(&ge.ginv, phi.cos(), phi.sin()) {
                check(omega)?;
            }
        }
        Ok(hinv)
    }

    /// Returns (fast source, slow source) = (𝔐Q + 𝔑₁·∂Ψ + 𝔑₂, 𝔐̃Q + Ñ₁·∂Ψ + Ñ₂).
    pub fn semilinear_sources(&self, psi: f64, dpsi: &Vec3, w: &Slow, q: f64) -> (f64, f64) {
        let s = &self.semilinear;
        let fast = (s.m)(psi, w) * q + (s.n1)(psi, w).dot(dpsi) + (s.n2)(psi, w);
        let slow = (s.m_slow)(psi, w) * q + (s.n1_slow)(psi, w).dot(dpsi) + (s.n2_slow)(psi, w);
        (fast, slow)
    }

    /// Randomized check of the structural assumptions: g^(Small)(0) = 0,
    /// (g⁻¹)⁰⁰ = (h⁻¹)⁰⁰ = −1, the 𝔑-type sources vanish at W = 0, and
    /// g-causal covectors are h-timelike, on states with |Ψ| + |W| ≤ 0.2.
    pub fn validate(&self, samples: usize, seed: u64) -> Result<(), MetricError> {
        let g0 = (self.g_small)(0.0);
        if g0.abs().max() > 1e-14 {
            return Err(MetricError::Structure(format!("g_small(0) = {g0}")));
        }
        let s = &self.semilinear;
        let mut rng = Rng::new(seed);
        for _ in 0..samples {
            let psi = rng.range(-0.1, 0.1);
            let mut w = Slow::new(rng.range(-1.0, 1.0), rng.range(-1.0, 1.0), rng.range(-1.0, 1.0), rng.range(-1.0, 1.0));
            let wn = w.norm();
            if wn > 0.0 {
                w *= rng.range(0.0, 0.1) / wn;
            }
            let ge = self.eval_fast_metric(psi)?;
            if (ge.ginv[(0, 0)] + 1.0).abs() > 1e-12 {
                return Err(MetricError::Structure(format!(
                    "(g^-1)^00 = {} at psi = {psi}",
                    ge.ginv[(0, 0)]
                )));
            }
            let hinv = (self.h_inv)(psi, &w);
            if (hinv[(0, 0)] + 1.0).abs() > 1e-12 {
                return Err(MetricError::Structure(format!(
                    "(h^-1)^00 = {} at psi = {psi}",
                    hinv[(0, 0)]
                )));
            }
            let zero = Slow::zeros();
            let vanish = [
                (s.n1)(psi, &zero).abs().max(),
                (s.n2)(psi, &zero).abs(),
                (s.n1_slow)(psi, &zero).abs().max(),
                (s.n2_slow)(psi, &zero).abs(),
            ];
            if vanish.iter().any(|&v| v != 0.0) {
                return Err(MetricError::Structure(format!(
                    "semilinear N-terms do not vanish at W = 0 (psi = {psi}): {vanish:?}"
                )));
            }
            // Random g-causal covector: spatial direction, then a time component
            // on or outside the null cone.
            let phi = rng.range(0.0, 2.0 * std::f64::consts::PI);
            let nulls = null_covectors(&ge.ginv, phi.cos(), phi.sin());
            let stretch = rng.range(0.0, 1.0);
            let pick = if rng.uniform() < 0.5 { 0 } else { 1 };
            let mut omega = nulls[pick];
            omega[0] += if pick == 0 { stretch } else { -stretch };
            let gval = (omega.transpose() * ge.ginv * omega)[0];
            if gval > 1e-14 {
                return Err(MetricError::Structure(format!(
                    "sampler produced a non-causal covector, g^-1(w,w) = {gval}"
                )));
            }
            let hval = (omega.transpose() * hinv * omega)[0];
            if hval >= 0.0 {
                return Err(MetricError::SpeedOrderViolation {
                    psi,
                    omega: [omega[0], omega[1], omega[2]],
                    value: hval,
                });
            }
        }
        Ok(())
    }
}

/// The two g-null covectors (ω₀, n₁, n₂) with the given spatial part.
pub fn null_covectors(ginv: &Mat3, n1: f64, n2: f64) -> [Vec3; 2] {
    // −ω₀² + 2Bω₀ + C = 0 using (g⁻¹)⁰⁰ = −1.
    let a = -ginv[(0, 0)];
    let b = ginv[(0, 1)] * n1 + ginv[(0, 2)] * n2;
    let c = ginv[(1, 1)] * n1 * n1 + 2.0 * ginv[(1, 2)] * n1 * n2 + ginv[(2, 2)] * n2 * n2;
    let disc = (b * b + a * c).sqrt();
    [
        Vec3::new((b + disc) / a, n1, n2),
        Vec3::new((b - disc) / a, n1, n2),
    ]
}

/// (g⁻¹)^{αβ} ∂_αΨ ∂_βΨ.
pub fn null_form(ge: &MetricEval, dpsi: &Vec3) -> f64 {
    (dpsi.transpose() * ge.ginv * dpsi)[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn minkowski_at_zero() {
        let ge = MetricModel::model_quadratic().eval_fast_metric(0.0).unwrap();
        assert_eq!(ge.g, minkowski());
        assert_eq!(ge.big_g, spatial_sym(2.0, 0.0, 0.0));
    }

    #[test]
    fn model_metric_at_point_one() {
        let ge = MetricModel::model_quadratic().eval_fast_metric(0.1).unwrap();
        assert_relative_eq!(ge.g[(1, 1)], 1.21, epsilon = 1e-14);
        assert_relative_eq!(ge.big_g[(1, 1)], 2.2, epsilon = 1e-14);
        for i in 0..3 {
            for j in 0..3 {
                if (i, j) != (1, 1) {
                    assert_eq!(ge.big_g[(i, j)], 0.0);
                }
            }
        }
        // Finite-difference cross-check of G.
        let m = MetricModel::model_quadratic();
        let h = 1e-4;
        let fd = ((m.g_small(0.1 + h) - m.g_small(0.1 - h)) / (2.0 * h))[(1, 1)];
        assert!((fd - 2.2).abs() < 1e-8);
    }

    #[test]
    fn ginv_00_is_minus_one() {
        let m = MetricModel::model_quadratic();
        for psi in [-0.2, -0.05, 0.0, 0.13, 0.2] {
            assert_eq!(m.eval_fast_metric(psi).unwrap().ginv[(0, 0)], -1.0);
        }
    }

    #[test]
    fn non_lorentzian_is_rejected() {
        let err = MetricModel::model_quadratic().eval_fast_metric(-1.0).unwrap_err();
        assert_eq!(err, MetricError::NonLorentzian { psi: -1.0 });
    }

    #[test]
    fn numeric_derivatives_fallback() {
        let m = MetricModel::new(
            "quad-fd",
            |psi| spatial_sym((1.0 + psi) * (1.0 + psi) - 1.0, 0.0, 0.0),
            |_, _| default_h_inv(),
            Semilinear::model(),
        );
        assert!(!m.has_analytic_derivatives());
        let ge = m.eval_fast_metric(0.1).unwrap();
        assert!((ge.big_g[(1, 1)] - 2.2).abs() < 1e-8);
        assert!((ge.big_gp[(1, 1)] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn slow_metric_default_and_contractions() {
        let m = MetricModel::model_quadratic();
        let h = m.eval_slow_metric(0.0, &Slow::zeros()).unwrap();
        assert_eq!(h, default_h_inv());
        let null = Vec3::new(1.0, 1.0, 0.0);
        assert_relative_eq!((null.transpose() * h * null)[0], -0.75, epsilon = 1e-15);
        let timelike = Vec3::new(1.0, 0.0, 0.0);
        assert_eq!((timelike.transpose() * h * timelike)[0], -1.0);
    }

    #[test]
    fn speed_order_violation_detected() {
        let m = MetricModel::new(
            "too-fast",
            |_| Mat3::zeros(),
            |_, _| Mat3::from_diagonal(&Vec3::new(-1.0, 4.0, 4.0)),
            Semilinear::model(),
        );
        assert!(matches!(
            m.eval_slow_metric(0.0, &Slow::zeros()),
            Err(MetricError::SpeedOrderViolation { .. })
        ));
    }

    #[test]
    fn null_form_examples() {
        let m = MetricModel::model_quadratic();
        let g0 = m.eval_fast_metric(0.0).unwrap();
        assert_eq!(null_form(&g0, &Vec3::zeros()), 0.0);
        assert_eq!(null_form(&g0, &Vec3::new(1.0, 1.0, 0.0)), 0.0);
        let g1 = m.eval_fast_metric(0.1).unwrap();
        assert_relative_eq!(null_form(&g1, &Vec3::new(0.0, 1.0, 0.0)), 1.0 / 1.21, epsilon = 1e-15);
    }

    #[test]
    fn sources_vanish_without_slow_wave() {
        let m = MetricModel::model_quadratic();
        let (f, s) = m.semilinear_sources(0.07, &Vec3::new(0.3, -0.2, 0.1), &Slow::zeros(), 0.4);
        assert_eq!(f, 0.4);
        assert_eq!(s, 0.4);
        assert_eq!(m.semilinear_sources(0.0, &Vec3::zeros(), &Slow::zeros(), 0.0), (0.0, 0.0));
    }

    #[test]
    fn linear_set_term_by_term() {
        let m = MetricModel::model_quadratic().with_semilinear(Semilinear::linear());
        let psi = 0.1;
        let dpsi = Vec3::new(0.2, 0.0, 0.0);
        let w = Slow::new(0.01, 0.02, 0.0, 0.0);
        let ge = m.eval_fast_metric(psi).unwrap();
        let q = null_form(&ge, &dpsi);
        assert_relative_eq!(q, -0.04, epsilon = 1e-15);
        let (f, s) = m.semilinear_sources(psi, &dpsi, &w, q);
        // 𝔐Q + w0·∂tΨ + wΨ and 𝔐̃Q + w0·∂tΨ + w.
        assert_relative_eq!(f, -0.04 + 0.02 * 0.2 + 0.01 * 0.1, epsilon = 1e-15);
        assert_relative_eq!(s, -0.04 + 0.02 * 0.2 + 0.01, epsilon = 1e-15);
    }

    #[test]
    fn builtin_models_pass_validation() {
        MetricModel::model_quadratic().validate(10_000, 1).unwrap();
        MetricModel::model_quadratic()
            .with_semilinear(Semilinear::linear())
            .validate(2_000, 2)
            .unwrap();
        MetricModel::custom(&[0.5, 0.1], &[0.05], &[-0.3], [0.2, 0.0, 0.2], Semilinear::none())
            .validate(2_000, 3)
            .unwrap();
    }

    #[test]
    fn validation_catches_bad_source() {
        let mut s = Semilinear::model();
        s.n2 = Arc::new(|psi, _| psi);
        let m = MetricModel::model_quadratic().with_semilinear(s);
        assert!(matches!(m.validate(10, 0), Err(MetricError::Structure(_))));
    }

    #[test]
    fn custom_polynomial_derivatives() {
        let m = MetricModel::custom(&[2.0, 1.0], &[0.0], &[0.0, 0.0, 0.5], [0.25, 0.0, 0.25], Semilinear::none());
        let ge = m.eval_fast_metric(0.1).unwrap();
        assert_relative_eq!(ge.g[(1, 1)], 1.0 + 0.2 + 0.01, epsilon = 1e-15);
        assert_relative_eq!(ge.big_g[(1, 1)], 2.0 + 0.2, epsilon = 1e-15);
        assert_relative_eq!(ge.big_gp[(1, 1)], 2.0, epsilon = 1e-15);
        assert_relative_eq!(ge.big_g[(2, 2)], 1.5 * 0.01, epsilon = 1e-15);
        assert_relative_eq!(ge.big_gp[(2, 2)], 3.0 * 0.1, epsilon = 1e-15);
    }

    fn fd4(m: &MetricModel, psi: f64, h: f64) -> Mat3 {
        (-m.g_small(psi + 2.0 * h) + 8.0 * m.g_small(psi + h) - 8.0 * m.g_small(psi - h)
            + m.g_small(psi - 2.0 * h))
            / (12.0 * h)
    }

    proptest! {
        #[test]
        fn inverse_is_inverse(psi in -0.2f64..0.2) {
            let ge = MetricModel::model_quadratic().eval_fast_metric(psi).unwrap();
            let id = ge.g * ge.ginv;
            prop_assert!((id - Mat3::identity()).abs().max() <= 1e-12);
            prop_assert_eq!(ge.ginv[(0, 0)], -1.0);
            prop_assert!((ge.big_g - ge.big_g.transpose()).abs().max() == 0.0);
        }

        #[test]
        fn analytic_g_matches_fourth_order_differences(psi in -0.1f64..0.1) {
            for m in [
                MetricModel::model_quadratic(),
                MetricModel::custom(&[0.5, 0.1], &[0.05], &[-0.3], [0.2, 0.0, 0.2], Semilinear::none()),
            ] {
                let ge = m.eval_fast_metric(psi).unwrap();
                prop_assert!((ge.big_g - fd4(&m, psi, 1e-3)).abs().max() <= 1e-8);
                let fd = (m.g_small(psi + 1e-4) - m.g_small(psi - 1e-4)) / 2e-4;
                prop_assert!((ge.big_g - fd).abs().max() <= 1e-6);
            }
        }

        #[test]
        fn n_terms_vanish_exactly(psi in -0.2f64..0.2) {
            let s = Semilinear::model();
            let z = Slow::zeros();
            prop_assert_eq!((s.n1)(psi, &z), Vec3::zeros());
            prop_assert_eq!((s.n2)(psi, &z), 0.0);
            prop_assert_eq!((s.n1_slow)(psi, &z), Vec3::zeros());
            prop_assert_eq!((s.n2_slow)(psi, &z), 0.0);
        }
    }
}
