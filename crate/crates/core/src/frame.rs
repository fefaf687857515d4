//! Null frame {L, X, X̆, Y, N}, frame components of G, connection
//! coefficients on the one-dimensional tori, the Cartesian-to-frame
//! conversion, and the change-of-variables Jacobian.
//!
//! Tori are one-dimensional, so every ℓ_{t,u}-tangent tensor is represented
//! through its contraction with Θ = ∂x/∂θ and g̸⁻¹ = Θ⊗Θ/υ⁴.

use thiserror::Error;

use crate::metric::{MetricEval, Vec3};

/// Residual above which `build_frame` refuses the input.
pub const FRAME_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("frame-geometry/build_frame: degenerate frame, residuals {residuals:?}")]
    DegenerateFrame { residuals: [f64; 5] },
    #[error("frame-geometry/build_frame: mu = {mu} is not positive")]
    NonPositiveMu { mu: f64 },
    #[error("frame-geometry/cartesian_in_frame: degenerate torus, g(Y,Y) = {gyy}")]
    DegenerateTorus { gyy: f64 },
}

/// Cartesian components of the frame vectors at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameBundle {
    pub mu: f64,
    pub l: Vec3,
    pub x: Vec3,
    pub xb: Vec3,
    pub y: Vec3,
    pub n: Vec3,
    pub l_small: [f64; 2],
    pub x_small: [f64; 2],
    pub y_small: [f64; 2],
}

/// Frame contractions of G and the torus metric component υ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameComponents {
    pub g_ll: f64,
    pub g_lx: f64,
    pub g_xx: f64,
    /// G(L, Θ)
    pub g_ltheta: f64,
    /// G(X, Θ)
    pub g_xtheta: f64,
    /// G(Θ, Θ)
    pub g_thetatheta: f64,
    pub upsilon: f64,
}

/// μ-weighted connection coefficients, all contracted with Θ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConnectionPieces {
    pub trchi: f64,
    /// ζ^(Trans)_Θ + μ ζ^(Tan)_Θ
    pub mu_zeta: f64,
    /// tr k̸^(Trans) + μ tr k̸^(Tan)
    pub mu_trk: f64,
    /// Unweighted pieces, needed separately by the energy audit.
    pub zeta_tan: f64,
    pub zeta_trans: f64,
    pub trk_trans: f64,
    pub trk_tan: f64,
    pub rho: f64,
}

/// Frame built without the residual check; solvers use this and monitor the
/// residuals themselves.
pub fn build_frame_unchecked(ge: &MetricEval, mu: f64, l_small: [f64; 2]) -> FrameBundle {
    let l = Vec3::new(1.0, 1.0 + l_small[0], l_small[1]);
    let mut x = Vec3::zeros();
    for nu in 0..3 {
        x[nu] = -l[nu] - ge.ginv[(0, nu)];
    }
    let xb = x * mu;
    // Y = ∂₂ + g(∂₂, L) X; the L-component vanishes because g(∂₂, N) = 0.
    let l_2 = (ge.g.row(2) * l)[0];
    let y = Vec3::new(0.0, l_2 * x[1], 1.0 + l_2 * x[2]);
    let n = l + x;
    FrameBundle {
        mu,
        l,
        x,
        xb,
        y,
        n,
        l_small,
        x_small: [x[1] + 1.0, x[2]],
        y_small: [y[1], y[2] - 1.0],
    }
}

/// L = (1, 1 + L¹_s, L²_s), X = −L − (g⁻¹)^{0·}, X̆ = μX, Y = Π∂₂, N = L + X.
pub fn build_frame(ge: &MetricEval, mu: f64, l_small: [f64; 2]) -> Result<FrameBundle, FrameError> {
    if !(mu > 0.0) {
        return Err(FrameError::NonPositiveMu { mu });
    }
    let fb = build_frame_unchecked(ge, mu, l_small);
    let residuals = frame_residuals(&fb, ge);
    if residuals.iter().any(|r| !(*r <= FRAME_TOLERANCE)) {
        return Err(FrameError::DegenerateFrame { residuals });
    }
    Ok(fb)
}

/// |g(L,L)|, |g(L,X)+1|, |g(X,X)−1|, |g(N,N)+1|, max_ν |N^ν + (g⁻¹)^{0ν}|.
pub fn frame_residuals(fb: &FrameBundle, ge: &MetricEval) -> [f64; 5] {
    let n_res = (0..3)
        .map(|nu| (fb.n[nu] + ge.ginv[(0, nu)]).abs())
        .fold(0.0, f64::max);
    [
        ge.dot(&fb.l, &fb.l).abs(),
        (ge.dot(&fb.l, &fb.x) + 1.0).abs(),
        (ge.dot(&fb.x, &fb.x) - 1.0).abs(),
        (ge.dot(&fb.n, &fb.n) + 1.0).abs(),
        n_res,
    ]
}

/// μ and L_(Small) of the frame adapted to an eikonal function whose spatial
/// gradient at the point is ζ: the null covector du = (τ, ζ) with L future
/// directed, L = μ L_geo, L_geo = −g⁻¹·du, and μ fixed by L⁰ = 1.
pub fn eikonal_frame_data(ge: &MetricEval, zeta: [f64; 2]) -> (f64, [f64; 2]) {
    let gi = &ge.ginv;
    let b = gi[(0, 1)] * zeta[0] + gi[(0, 2)] * zeta[1];
    let c = gi[(1, 1)] * zeta[0] * zeta[0]
        + 2.0 * gi[(1, 2)] * zeta[0] * zeta[1]
        + gi[(2, 2)] * zeta[1] * zeta[1];
    let tau = b + (b * b + c).sqrt();
    let du = Vec3::new(tau, zeta[0], zeta[1]);
    let l_geo = -(gi * du);
    let mu = 1.0 / l_geo[0];
    let l = l_geo * mu;
    (mu, [l[1] - 1.0, l[2]])
}

/// Initial relations on Σ₀ for u = 1 − x¹:
/// μ = 1/√((ḡ⁻¹)¹¹), L^i_s = (ḡ⁻¹)^{i1}/√((ḡ⁻¹)¹¹) − δ^{i1} − (g⁻¹)^{0i},
/// Ξ^i = (ḡ⁻¹)^{i1}/(ḡ⁻¹)¹¹ − δ^{i1}; ḡ⁻¹ is the inverse of the spatial block.
pub fn initial_relations(ge: &MetricEval) -> (f64, [f64; 2], [f64; 2]) {
    let gbi = ge.gbar_inv();
    let s = gbi[(0, 0)].sqrt();
    let mu = 1.0 / s;
    let l_small = [
        gbi[(0, 0)] / s - 1.0 - ge.ginv[(0, 1)],
        gbi[(1, 0)] / s - ge.ginv[(0, 2)],
    ];
    let xi = [0.0, gbi[(1, 0)] / gbi[(0, 0)]];
    (mu, l_small, xi)
}

pub fn frame_g_components(ge: &MetricEval, fb: &FrameBundle, theta: &Vec3) -> FrameComponents {
    FrameComponents {
        g_ll: ge.big_g_dot(&fb.l, &fb.l),
        g_lx: ge.big_g_dot(&fb.l, &fb.x),
        g_xx: ge.big_g_dot(&fb.x, &fb.x),
        g_ltheta: ge.big_g_dot(&fb.l, theta),
        g_xtheta: ge.big_g_dot(&fb.x, theta),
        g_thetatheta: ge.big_g_dot(theta, theta),
        upsilon: ge.dot(theta, theta).sqrt(),
    }
}

/// Pointwise inputs for [`connection_pieces`].
#[derive(Clone, Copy, Debug, Default)]
pub struct ConnectionInputs {
    /// LΨ
    pub lpsi: f64,
    /// X̆Ψ
    pub xbpsi: f64,
    /// ∂_θΨ
    pub dth_psi: f64,
    /// ∂_θ L^a, a = 1, 2
    pub dth_l: [f64; 2],
    /// ∂_θ x^a = Θ^a
    pub dth_x: [f64; 2],
}

pub fn connection_pieces(
    ge: &MetricEval,
    fb: &FrameBundle,
    fc: &FrameComponents,
    inp: &ConnectionInputs,
) -> ConnectionPieces {
    let ups2 = fc.upsilon * fc.upsilon;
    let mu = fb.mu;
    let mut gdl_dx = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            gdl_dx += ge.g[(a + 1, b + 1)] * inp.dth_l[a] * inp.dth_x[b];
        }
    }
    let trchi = gdl_dx / ups2 + 0.5 * fc.g_thetatheta * inp.lpsi / ups2;
    let zeta_trans = -0.5 * fc.g_ltheta * inp.xbpsi;
    let zeta_tan = 0.5 * fc.g_xtheta * inp.lpsi - 0.5 * (fc.g_lx + fc.g_xx) * inp.dth_psi;
    let trk_trans = 0.5 * fc.g_thetatheta * inp.xbpsi / ups2;
    let trk_tan = 0.5 * fc.g_thetatheta * inp.lpsi / ups2
        - fc.g_ltheta * inp.dth_psi / ups2
        - fc.g_xtheta * inp.dth_psi / ups2;
    let g_small_21 = ge.g[(2, 1)];
    let rho = g_small_21 * fb.x[1] + ge.g[(2, 2)] * fb.x_small[1];
    ConnectionPieces {
        trchi,
        mu_zeta: zeta_trans + mu * zeta_tan,
        mu_trk: trk_trans + mu * trk_tan,
        zeta_tan,
        zeta_trans,
        trk_trans,
        trk_tan,
        rho,
    }
}

/// Rows ν = t, 1, 2 of (c^L, c^X, c^Y) with ∂_ν = c^L L + c^X X + c^Y Y.
pub fn cartesian_in_frame(ge: &MetricEval, fb: &FrameBundle) -> Result<[[f64; 3]; 3], FrameError> {
    let gyy = ge.dot(&fb.y, &fb.y);
    if !(gyy > 0.0) {
        return Err(FrameError::DegenerateTorus { gyy });
    }
    Ok(cartesian_in_frame_unchecked(ge, fb, gyy))
}

pub(crate) fn cartesian_in_frame_unchecked(ge: &MetricEval, fb: &FrameBundle, gyy: f64) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (nu, row) in out.iter_mut().enumerate() {
        let g_nu = ge.g.row(nu);
        // α = −g(∂_ν, N), β = −g(∂_ν, L), γ = g(∂_ν, Y)/g(Y,Y).
        row[0] = -(g_nu * fb.n)[0];
        row[1] = -(g_nu * fb.l)[0];
        row[2] = (g_nu * fb.y)[0] / gyy;
    }
    // Exact values of the structural entries.
    out[0][0] = 1.0;
    out[1][0] = 0.0;
    out[2][0] = 0.0;
    out
}

/// The Jacobian determinant ∂(x¹,x²)/∂(u,θ) predicted by −μ (det ḡ)^{−1/2} υ.
pub fn jacobian_formula(ge: &MetricEval, mu: f64, upsilon: f64) -> f64 {
    -mu * upsilon / ge.det_gbar().sqrt()
}

/// Determinant of ∂(x¹,x²)/∂(u,θ) from the four partial derivatives.
pub fn jacobian_det(x1_u: f64, x1_th: f64, x2_u: f64, x2_th: f64) -> f64 {
    x1_u * x2_th - x1_th * x2_u
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{MetricModel, Semilinear};
    use crate::rng::Rng;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn model() -> MetricModel {
        MetricModel::model_quadratic()
    }

    #[test]
    fn minkowski_frame() {
        let ge = model().eval_fast_metric(0.0).unwrap();
        let fb = build_frame(&ge, 1.0, [0.0, 0.0]).unwrap();
        assert_eq!(fb.l, Vec3::new(1.0, 1.0, 0.0));
        assert_eq!(fb.x, Vec3::new(0.0, -1.0, 0.0));
        assert_eq!(fb.y, Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(fb.n, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(frame_residuals(&fb, &ge), [0.0; 5]);
    }

    #[test]
    fn plane_model_frame() {
        let ge = model().eval_fast_metric(0.1).unwrap();
        let fb = build_frame(&ge, 1.1, [1.0 / 1.1 - 1.0, 0.0]).unwrap();
        assert_relative_eq!(fb.x[1], -1.0 / 1.1, epsilon = 1e-15);
        assert_relative_eq!(ge.dot(&fb.x, &fb.x), 1.0, epsilon = 1e-14);
        assert_eq!(fb.xb[0], 0.0);
        assert_relative_eq!(ge.dot(&fb.l, &fb.xb), -1.1, epsilon = 1e-14);
    }

    #[test]
    fn inconsistent_input_rejected() {
        let ge = model().eval_fast_metric(0.1).unwrap();
        assert!(matches!(
            build_frame(&ge, 1.0, [0.0, 0.0]),
            Err(FrameError::DegenerateFrame { .. })
        ));
        assert!(matches!(
            build_frame(&ge, 0.0, [1.0 / 1.1 - 1.0, 0.0]),
            Err(FrameError::NonPositiveMu { .. })
        ));
    }

    #[test]
    fn nullness_residual_first_order() {
        // Perturbing L¹ by δ changes g(L,L) by 2 g_11 L¹ δ + O(δ²).
        let psi = 0.05;
        let ge = model().eval_fast_metric(psi).unwrap();
        let (mu, ls, _) = initial_relations(&ge);
        let d = 1e-3;
        let fb = build_frame_unchecked(&ge, mu, [ls[0] + d, ls[1]]);
        let r = frame_residuals(&fb, &ge)[0];
        let predicted = 2.0 * (1.0 + psi) * d;
        assert!((r / predicted - 1.0).abs() < 1e-2, "{r} vs {predicted}");
    }

    #[test]
    fn initial_relations_match_model() {
        let ge = model().eval_fast_metric(0.1).unwrap();
        let (mu, ls, xi) = initial_relations(&ge);
        assert_relative_eq!(mu, 1.1, epsilon = 1e-15);
        assert_relative_eq!(ls[0], 1.0 / 1.1 - 1.0, epsilon = 1e-15);
        assert_eq!(ls[1], 0.0);
        assert_eq!(xi, [0.0, 0.0]);
        let (mu2, ls2) = eikonal_frame_data(&ge, [-1.0, 0.0]);
        assert_relative_eq!(mu2, mu, epsilon = 1e-14);
        assert_relative_eq!(ls2[0], ls[0], epsilon = 1e-14);
    }

    #[test]
    fn initial_relations_general_metric() {
        let m = MetricModel::custom(&[0.4], &[0.3], &[-0.2], [0.2, 0.0, 0.2], Semilinear::none());
        let ge = m.eval_fast_metric(0.15).unwrap();
        let (mu, ls, _) = initial_relations(&ge);
        let (mu2, ls2) = eikonal_frame_data(&ge, [-1.0, 0.0]);
        assert_relative_eq!(mu, mu2, epsilon = 1e-13);
        assert_relative_eq!(ls[0], ls2[0], epsilon = 1e-13);
        assert_relative_eq!(ls[1], ls2[1], epsilon = 1e-13);
        let fb = build_frame(&ge, mu, ls).unwrap();
        assert!(frame_residuals(&fb, &ge).iter().all(|r| *r <= 1e-13));
    }

    #[test]
    fn g_components_plane() {
        let psi = 0.1;
        let ge = model().eval_fast_metric(psi).unwrap();
        let (mu, ls, _) = initial_relations(&ge);
        let fb = build_frame(&ge, mu, ls).unwrap();
        let fc = frame_g_components(&ge, &fb, &Vec3::new(0.0, 0.0, 1.0));
        assert_relative_eq!(fc.g_ll, 2.0 / 1.1, epsilon = 1e-14);
        assert_relative_eq!(fc.g_lx, -2.0 / 1.1, epsilon = 1e-14);
        assert_relative_eq!(fc.g_xx, 2.0 / 1.1, epsilon = 1e-14);
        assert_eq!(fc.g_ltheta, 0.0);
        assert_eq!(fc.upsilon, 1.0);
        // Finite-difference cross-check of G_LL with the frame held fixed.
        let m = model();
        let h = 1e-5;
        let gp = m.eval_fast_metric(psi + h).unwrap();
        let gm = m.eval_fast_metric(psi - h).unwrap();
        let fd = (gp.dot(&fb.l, &fb.l) - gm.dot(&fb.l, &fb.l)) / (2.0 * h);
        assert!((fd - fc.g_ll).abs() < 1e-8);
    }

    #[test]
    fn g_components_vanish_for_fixed_metric() {
        let m = MetricModel::new("flat", |_| crate::metric::Mat3::zeros(), |_, _| crate::metric::default_h_inv(), Semilinear::none());
        let ge = m.eval_fast_metric(0.05).unwrap();
        let fb = build_frame(&ge, 1.0, [0.0, 0.0]).unwrap();
        let fc = frame_g_components(&ge, &fb, &Vec3::new(0.0, 0.1, 1.0));
        assert_eq!([fc.g_ll, fc.g_lx, fc.g_xx, fc.g_ltheta, fc.g_xtheta, fc.g_thetatheta], [0.0; 6]);
    }

    #[test]
    fn genuine_nonlinearity_at_zero() {
        let ge = model().eval_fast_metric(0.0).unwrap();
        let l_flat = Vec3::new(1.0, 1.0, 0.0);
        assert_eq!(ge.big_g_dot(&l_flat, &l_flat), 2.0);
    }

    #[test]
    fn connection_examples() {
        let ge = model().eval_fast_metric(0.1).unwrap();
        let (mu, ls, _) = initial_relations(&ge);
        let fb = build_frame(&ge, mu, ls).unwrap();
        let theta = Vec3::new(0.0, 0.0, 1.0);
        let fc = frame_g_components(&ge, &fb, &theta);
        let plane = ConnectionInputs {
            lpsi: 0.3,
            xbpsi: -0.2,
            dth_psi: 0.0,
            dth_l: [0.0, 0.0],
            dth_x: [0.0, 1.0],
        };
        let cp = connection_pieces(&ge, &fb, &fc, &plane);
        assert_eq!(cp.trchi, 0.0);
        assert_eq!(cp.mu_zeta, 0.0);
        assert_eq!(cp.rho, 0.0);

        let g0 = model().eval_fast_metric(0.0).unwrap();
        let fb0 = build_frame(&g0, 1.0, [0.0, 0.0]).unwrap();
        let fc0 = frame_g_components(&g0, &fb0, &Vec3::new(0.0, 0.02, 1.0));
        let inp = ConnectionInputs {
            lpsi: 0.0,
            xbpsi: 0.0,
            dth_psi: 0.0,
            dth_l: [0.01, 0.0],
            dth_x: [0.02, 1.0],
        };
        let cp0 = connection_pieces(&g0, &fb0, &fc0, &inp);
        let ups2 = fc0.upsilon * fc0.upsilon;
        assert_relative_eq!(cp0.trchi * ups2, 2e-4, epsilon = 1e-18);
        assert_eq!(cp0.mu_trk, 0.0);
    }

    #[test]
    fn cartesian_in_frame_examples() {
        let g0 = model().eval_fast_metric(0.0).unwrap();
        let fb0 = build_frame(&g0, 1.0, [0.0, 0.0]).unwrap();
        let c = cartesian_in_frame(&g0, &fb0).unwrap();
        assert_eq!(c[0], [1.0, 1.0, 0.0]);
        assert_eq!(c[1], [0.0, -1.0, 0.0]);
        assert_eq!(c[2], [0.0, 0.0, 1.0]);

        let psi = 0.1;
        let ge = model().eval_fast_metric(psi).unwrap();
        let (mu, ls, _) = initial_relations(&ge);
        let fb = build_frame(&ge, mu, ls).unwrap();
        let c = cartesian_in_frame(&ge, &fb).unwrap();
        assert_relative_eq!(c[1][1], -(1.0 + psi), epsilon = 1e-14);
        // 2∂₁ = (1+Ψ)(L − ŬL/μ) with ŬL = μL + 2X̆, i.e. ∂₁ = −(1+Ψ) X.
        assert_relative_eq!(c[1][0], 0.0);
    }

    /// Random admissible frame: model metric, |Ψ| ≤ 0.1, random eikonal gradient.
    pub(crate) fn random_state(rng: &mut Rng) -> (MetricEval, FrameBundle) {
        let psi = rng.range(-0.1, 0.1);
        let ge = model().eval_fast_metric(psi).unwrap();
        let phi = rng.range(0.0, 2.0 * std::f64::consts::PI);
        let scale = rng.range(0.5, 2.0);
        let (mu, ls) = eikonal_frame_data(&ge, [scale * phi.cos(), scale * phi.sin()]);
        (ge, build_frame_unchecked(&ge, mu, ls))
    }

    #[test]
    fn round_trip_thousand_states() {
        let mut rng = Rng::new(11);
        for _ in 0..1000 {
            let (ge, fb) = random_state(&mut rng);
            let c = cartesian_in_frame(&ge, &fb).unwrap();
            for nu in 0..3 {
                let v = fb.l * c[nu][0] + fb.x * c[nu][1] + fb.y * c[nu][2];
                let mut e = Vec3::zeros();
                e[nu] = 1.0;
                assert!((v - e).abs().max() <= 1e-12, "{v:?} vs {e:?}");
            }
        }
    }

    #[test]
    fn ul_geometric_components() {
        // ŬL = μL + 2X̆ is null, and in (t, u) coordinates has components (μ, 2):
        // ŬL t = μ, ŬL u = 2 with Lu = 0, X̆u = 1.
        let mut rng = Rng::new(3);
        for _ in 0..100 {
            let (ge, fb) = random_state(&mut rng);
            let ul = fb.l * fb.mu + fb.xb * 2.0;
            assert!(ge.dot(&ul, &ul).abs() <= 1e-12);
            assert_relative_eq!(ul[0], fb.mu, epsilon = 1e-14);
            // du is proportional to −L♭/μ, so X̆u = −g(X̆, L)/μ = 1.
            let xbu = -ge.dot(&fb.xb, &fb.l) / fb.mu;
            assert_relative_eq!(xbu, 1.0, epsilon = 1e-12);
            let ulu = -ge.dot(&ul, &fb.l) / fb.mu;
            assert_relative_eq!(ulu, 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn jacobian_at_t0() {
        // x¹ = 1 − u, x² = θ: det = −1, and −μ(det ḡ)^{−1/2}υ = −(1+Ψ₀)/(1+Ψ₀) = −1.
        let m = model();
        for k in 0..=10 {
            let psi = 0.1 * k as f64 / 10.0;
            let ge = m.eval_fast_metric(psi).unwrap();
            let (mu, _, _) = initial_relations(&ge);
            let r = jacobian_det(-1.0, 0.0, 0.0, 1.0) - jacobian_formula(&ge, mu, 1.0);
            assert!(r.abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn built_frames_are_null_frames(seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let (ge, fb) = random_state(&mut rng);
            let res = frame_residuals(&fb, &ge);
            prop_assert!(res.iter().all(|r| *r <= 1e-12), "{:?}", res);
            prop_assert_eq!(fb.l[0], 1.0);
            prop_assert_eq!(fb.xb[0], 0.0);
            prop_assert!((ge.dot(&fb.l, &fb.xb) + fb.mu).abs() <= 1e-12);
            prop_assert!((fb.xb - fb.x * fb.mu).abs().max() == 0.0);
        }

        #[test]
        fn theta_independent_states_have_no_trchi(psi in -0.1f64..0.1, lpsi in -1.0f64..1.0, xb in -1.0f64..1.0) {
            let ge = model().eval_fast_metric(psi).unwrap();
            let (mu, ls, _) = initial_relations(&ge);
            let fb = build_frame(&ge, mu, ls).unwrap();
            let fc = frame_g_components(&ge, &fb, &Vec3::new(0.0, 0.0, 1.0));
            let cp = connection_pieces(&ge, &fb, &fc, &ConnectionInputs {
                lpsi, xbpsi: xb, dth_psi: 0.0, dth_l: [0.0, 0.0], dth_x: [0.0, 1.0],
            });
            prop_assert_eq!(cp.trchi, 0.0);
        }
    }
}
