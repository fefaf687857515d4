//! Initial data: the large plane-symmetric profile and the small seeded
//! perturbations, all as functions of (u, θ) on the initial slice where
//! x¹ = 1 − u and x² = θ.

use std::f64::consts::PI;

use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProfileKind {
    /// φ(x) = x for every x (not compactly supported; plane runs only).
    Ramp,
    /// φ(x) = sin⁶(πx) on [0, 1], zero elsewhere.
    Bump,
}

impl ProfileKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ramp" => Some(Self::Ramp),
            "bump" => Some(Self::Bump),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Ramp => "ramp",
            Self::Bump => "bump",
        }
    }
}

/// Ψ₀ = λ φ(x¹).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Profile {
    pub kind: ProfileKind,
    pub lambda: f64,
}

impl Profile {
    pub fn ramp(lambda: f64) -> Self {
        Self {
            kind: ProfileKind::Ramp,
            lambda,
        }
    }

    pub fn bump(lambda: f64) -> Self {
        Self {
            kind: ProfileKind::Bump,
            lambda,
        }
    }

    /// (φ, φ′, φ″) at x¹, without the factor λ.
    pub fn shape(&self, x: f64) -> [f64; 3] {
        match self.kind {
            ProfileKind::Ramp => [x, 1.0, 0.0],
            ProfileKind::Bump => {
                if !(0.0..=1.0).contains(&x) {
                    return [0.0; 3];
                }
                let (s, c) = (PI * x).sin_cos();
                let s4 = s.powi(4);
                [
                    s4 * s * s,
                    6.0 * PI * s4 * s * c,
                    6.0 * PI * PI * s4 * (5.0 * c * c - s * s),
                ]
            }
        }
    }

    /// (Ψ₀, ∂₁Ψ₀, ∂₁²Ψ₀) at x¹.
    pub fn at_x(&self, x: f64) -> [f64; 3] {
        self.shape(x).map(|v| self.lambda * v)
    }

    /// (Ψ₀, ∂_uΨ₀) at u, using x¹ = 1 − u.
    pub fn at_u(&self, u: f64) -> (f64, f64) {
        let [p, dp, _] = self.at_x(1.0 - u);
        (p, -dp)
    }
}

/// Smooth field E(u) R(u) A(θ) compactly supported in u ∈ [0, 1]:
/// E = sin⁶(πu), R = Σ_k e_k cos(kπu), A = c₀ + Σ_m c_m cos 2πmθ + d_m sin 2πmθ.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothField {
    pub scale: f64,
    pub radial: [f64; 3],
    pub c0: f64,
    pub modes: Vec<(f64, f64)>,
}

impl SmoothField {
    pub fn zero() -> Self {
        Self {
            scale: 0.0,
            radial: [1.0, 0.0, 0.0],
            c0: 1.0,
            modes: Vec::new(),
        }
    }

    pub fn random(rng: &mut Rng, n_modes: usize) -> Self {
        let radial = [1.0, rng.range(-0.5, 0.5), rng.range(-0.5, 0.5)];
        let c0 = if n_modes == 0 { 1.0 } else { rng.range(-1.0, 1.0) };
        let modes = (0..n_modes)
            .map(|_| (rng.range(-1.0, 1.0), rng.range(-1.0, 1.0)))
            .collect();
        Self {
            scale: 1.0,
            radial,
            c0,
            modes,
        }
    }

    /// (value, ∂_u, ∂_θ).
    pub fn eval(&self, u: f64, theta: f64) -> [f64; 3] {
        if self.scale == 0.0 || !(0.0..=1.0).contains(&u) {
            return [0.0; 3];
        }
        let (s, c) = (PI * u).sin_cos();
        let s5 = s.powi(5);
        let env = s5 * s;
        let denv = 6.0 * PI * s5 * c;
        let mut rad = 0.0;
        let mut drad = 0.0;
        for (k, ek) in self.radial.iter().enumerate() {
            let w = k as f64 * PI;
            rad += ek * (w * u).cos();
            drad -= ek * w * (w * u).sin();
        }
        let mut ang = self.c0;
        let mut dang = 0.0;
        for (m, (cm, dm)) in self.modes.iter().enumerate() {
            let w = 2.0 * PI * (m + 1) as f64;
            let (sn, cs) = (w * theta).sin_cos();
            ang += cm * cs + dm * sn;
            dang += w * (dm * cs - cm * sn);
        }
        let k = self.scale;
        [
            k * env * rad * ang,
            k * (denv * rad + env * drad) * ang,
            k * env * rad * dang,
        ]
    }

    /// Sampled sup norms of (value, ∂_u, ∂_θ).
    fn sups(&self, nu: usize, nt: usize) -> [f64; 3] {
        let mut m = [0.0f64; 3];
        for i in 0..=nu {
            let u = i as f64 / nu as f64;
            for j in 0..nt {
                let v = self.eval(u, j as f64 / nt as f64);
                for k in 0..3 {
                    m[k] = m[k].max(v[k].abs());
                }
            }
        }
        m
    }
}

/// Perturbation settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbationSpec {
    /// Absolute amplitude ε̊.
    pub eps: f64,
    pub seed: u64,
    /// Number of θ Fourier modes; 0 keeps the data plane symmetric.
    pub theta_modes: usize,
}

/// Pointwise initial values on Σ₀.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PointData {
    pub psi: f64,
    pub psi_u: f64,
    pub psi_th: f64,
    /// LΨ on Σ₀.
    pub a: f64,
    pub w: f64,
    pub w_u: f64,
    pub w_th: f64,
    pub w0: f64,
}

impl PointData {
    /// Cartesian (w₁, w₂) = (∂₁w, ∂₂w) = (−∂_u w, ∂_θ w) on Σ₀.
    pub fn w_cart(&self) -> (f64, f64) {
        (-self.w_u, self.w_th)
    }
}

/// Profile plus normalized perturbation fields.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialData {
    pub profile: Profile,
    pub eps: f64,
    pub psi: SmoothField,
    pub a: SmoothField,
    pub w: SmoothField,
    pub w0: SmoothField,
}

const SUP_NU: usize = 2048;
const SUP_NT: usize = 64;

impl InitialData {
    pub fn unperturbed(profile: Profile) -> Self {
        Self {
            profile,
            eps: 0.0,
            psi: SmoothField::zero(),
            a: SmoothField::zero(),
            w: SmoothField::zero(),
            w0: SmoothField::zero(),
        }
    }

    /// Seeded perturbations, each normalized so its sampled sup (including
    /// θ-derivatives, and for w the Cartesian gradient) equals ε̊.
    /// Plane-symmetric perturbations leave Ψ itself untouched.
    pub fn new(profile: Profile, pert: PerturbationSpec) -> Self {
        if pert.eps == 0.0 {
            return Self::unperturbed(profile);
        }
        let nt = if pert.theta_modes == 0 { 1 } else { SUP_NT };
        let make = |stream: u64, use_du: bool, use_dth: bool| {
            let mut rng = Rng::stream(pert.seed, stream);
            let mut f = SmoothField::random(&mut rng, pert.theta_modes);
            let s = f.sups(SUP_NU, nt);
            let mut m = s[0];
            if use_du {
                m = m.max(s[1]);
            }
            if use_dth {
                m = m.max(s[2]);
            }
            f.scale = pert.eps / m;
            f
        };
        let psi = if pert.theta_modes == 0 {
            SmoothField::zero()
        } else {
            make(0, false, true)
        };
        let a = make(1, false, false);
        let w = make(2, true, true);
        let w0 = make(3, false, false);
        Self {
            profile,
            eps: pert.eps,
            psi,
            a,
            w,
            w0,
        }
    }

    pub fn is_plane(&self) -> bool {
        [&self.psi, &self.a, &self.w, &self.w0]
            .iter()
            .all(|f| f.scale == 0.0 || f.modes.is_empty())
    }

    pub fn at(&self, u: f64, theta: f64) -> PointData {
        let (p0, p0u) = self.profile.at_u(u);
        let dp = self.psi.eval(u, theta);
        let w = self.w.eval(u, theta);
        PointData {
            psi: p0 + dp[0],
            psi_u: p0u + dp[1],
            psi_th: dp[2],
            a: self.a.eval(u, theta)[0],
            w: w[0],
            w_u: w[1],
            w_th: w[2],
            w0: self.w0.eval(u, theta)[0],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_derivatives_match_differences() {
        let p = Profile::bump(0.1);
        let h = 1e-5;
        for x in [0.1, 0.3, 0.5, 0.77] {
            let [_, d, dd] = p.at_x(x);
            let fd = (p.at_x(x + h)[0] - p.at_x(x - h)[0]) / (2.0 * h);
            let fdd = (p.at_x(x + h)[1] - p.at_x(x - h)[1]) / (2.0 * h);
            assert!((d - fd).abs() < 1e-9);
            assert!((dd - fdd).abs() < 1e-7);
        }
        assert_eq!(p.at_x(-0.1), [0.0; 3]);
        assert!((p.at_x(0.5)[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn ramp_in_u() {
        let p = Profile::ramp(0.1);
        let (v, du) = p.at_u(0.25);
        assert!((v - 0.075).abs() < 1e-15);
        assert_eq!(du, -0.1);
    }

    #[test]
    fn smooth_field_derivatives() {
        let mut rng = Rng::new(3);
        let f = SmoothField::random(&mut rng, 3);
        let h = 1e-6;
        for (u, th) in [(0.3, 0.1), (0.6, 0.9), (0.05, 0.5)] {
            let v = f.eval(u, th);
            let du = (f.eval(u + h, th)[0] - f.eval(u - h, th)[0]) / (2.0 * h);
            let dth = (f.eval(u, th + h)[0] - f.eval(u, th - h)[0]) / (2.0 * h);
            assert!((v[1] - du).abs() < 1e-7, "{} {}", v[1], du);
            assert!((v[2] - dth).abs() < 1e-7);
        }
        assert_eq!(f.eval(1.2, 0.0), [0.0; 3]);
        assert!(f.eval(0.0, 0.3)[0].abs() < 1e-15);
    }

    #[test]
    fn perturbations_are_normalized_and_reproducible() {
        let spec = PerturbationSpec {
            eps: 1e-3,
            seed: 11,
            theta_modes: 2,
        };
        let d1 = InitialData::new(Profile::bump(0.1), spec);
        let d2 = InitialData::new(Profile::bump(0.1), spec);
        assert_eq!(d1, d2);
        let s = d1.a.sups(SUP_NU, SUP_NT);
        assert!((s[0] - 1e-3).abs() < 1e-15);
        let s = d1.w.sups(SUP_NU, SUP_NT);
        assert!((s[0].max(s[1]).max(s[2]) - 1e-3).abs() < 1e-15);
        assert!(!d1.is_plane());
        let plane = InitialData::new(Profile::bump(0.1), PerturbationSpec { theta_modes: 0, ..spec });
        assert!(plane.is_plane());
        assert_eq!(plane.psi.scale, 0.0);
    }
}
