//! Weighted mixed radial-angular norms, the bracket [u₀]_p̃ with its
//! rescaling functionals, θ₁/θ₂, and the caloric Besov norm.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BoxField, BoxGrid, Representation};
use crate::spectral::heat_flow;
use crate::sphere::{sample_scaled, Interp, SphericalGrid};

/// Norm of |x − c|^β f in L^p_{|x|} L^{p̃}_θ; either exponent may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedNormSpec {
    pub p: f64,
    pub p_tilde: f64,
    pub beta: f64,
}

impl MixedNormSpec {
    pub fn new(p: f64, p_tilde: f64, beta: f64) -> Result<Self> {
        let s = Self { p, p_tilde, beta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0) || !(self.p_tilde >= 1.0) {
            return Err(Error::Domain(format!("exponents must be >= 1, got p = {}, p~ = {}", self.p, self.p_tilde)));
        }
        if !self.beta.is_finite() {
            return Err(Error::Domain("weight power must be finite".into()));
        }
        if self.p.is_finite() && !(self.beta * self.p > -3.0) {
            return Err(Error::Domain(format!(
                "weight |x|^{} is not locally L^{} integrable (needs beta*p > -3)",
                self.beta, self.p
            )));
        }
        Ok(())
    }
}

/// (α, p, p̃) with Λ = α + 2/p − 2/p̃.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentTriple {
    pub alpha: f64,
    pub p: f64,
    pub p_tilde: f64,
}

impl ExponentTriple {
    pub fn new(alpha: f64, p: f64, p_tilde: f64) -> Self {
        Self { alpha, p, p_tilde }
    }
}

pub fn lambda_index(e: ExponentTriple) -> f64 {
    e.alpha + 2.0 / e.p - 2.0 / e.p_tilde
}

/// Sampling rule and coverage tolerance for spherical quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormOptions {
    pub interp: Interp,
    /// Largest admissible fraction of the p-th power mass lying outside ρ_max.
    pub coverage_tol: f64,
}

impl Default for NormOptions {
    fn default() -> Self {
        Self { interp: Interp::Cubic, coverage_tol: 1e-3 }
    }
}

/// Angular norm ‖f(ρ_i ·)‖_{L^{p̃}(𝕊²)} per shell from node magnitudes.
pub fn shell_profile(mags: &[f64], g: &SphericalGrid, p_tilde: f64) -> Vec<f64> {
    let na = g.n_angular();
    let w = g.angular_weights();
    mags.chunks(na)
        .map(|shell| {
            if p_tilde.is_infinite() {
                shell.iter().fold(0.0, |m: f64, v| m.max(*v))
            } else {
                shell.iter().zip(w).map(|(v, w)| w * v.powf(p_tilde)).sum::<f64>().powf(1.0 / p_tilde)
            }
        })
        .collect()
}

/// Radial L^p(ρ²dρ) norm of ρ^β·profile.
fn radial_norm(profile: &[f64], g: &SphericalGrid, p: f64, beta: f64) -> f64 {
    let rho = g.radial_nodes();
    if p.is_infinite() {
        return profile.iter().zip(rho).fold(0.0, |m: f64, (a, r)| m.max(r.powf(beta) * a));
    }
    profile
        .iter()
        .zip(rho)
        .zip(g.radial_weights())
        .map(|((a, r), w)| w * (r.powf(beta) * a).powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

/// Weighted mass of f outside the ball B(center, radius), in p-th power units
/// (or the weighted maximum when p = ∞).
fn outside_mass(f: &BoxField, center: [f64; 3], radius: f64, spec: &MixedNormSpec) -> Result<f64> {
    let g = *f.grid();
    let mag = f.magnitude()?;
    let r2max = radius * radius;
    let weighted = |idx: usize| -> Option<f64> {
        let x = g.point(idx);
        let d2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2) + (x[2] - center[2]).powi(2);
        (d2 > r2max).then(|| d2.sqrt().powf(spec.beta) * mag[idx])
    };
    Ok(if spec.p.is_infinite() {
        (0..g.len()).into_par_iter().filter_map(weighted).reduce(|| 0.0, f64::max)
    } else {
        (0..g.len()).into_par_iter().filter_map(weighted).map(|v| v.powf(spec.p)).sum::<f64>() * g.cell_volume()
    })
}

/// Several mixed norms of λ f(λ·) from a single sampling pass, with a coverage check per spec.
pub(crate) fn mixed_norms_dilated(
    f: &BoxField,
    g: &SphericalGrid,
    specs: &[MixedNormSpec],
    lambda: f64,
    opts: NormOptions,
) -> Result<Vec<f64>> {
    for s in specs {
        s.validate()?;
    }
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("dilation must be > 0, got {lambda}")));
    }
    let h = f.grid().spacing();
    if lambda != 1.0 {
        let gap = g.radial_nodes().windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        if lambda * gap > 2.0 * h {
            return Err(Error::Resolution(format!(
                "dilation {lambda} spreads radial nodes to {:.4} > 2h = {:.4}",
                lambda * gap,
                2.0 * h
            )));
        }
    }
    let phys = f.as_physical()?;
    let mags = sample_scaled(&phys, g, lambda, opts.interp)?.magnitudes();
    let c = g.center();
    let scaled_center = [lambda * c[0], lambda * c[1], lambda * c[2]];
    let mut out = Vec::with_capacity(specs.len());
    let mut profiles: Vec<(f64, Vec<f64>)> = Vec::new();
    for spec in specs {
        let profile = match profiles.iter().find(|(pt, _)| *pt == spec.p_tilde) {
            Some((_, pr)) => pr.clone(),
            None => {
                let pr = shell_profile(&mags, g, spec.p_tilde);
                profiles.push((spec.p_tilde, pr.clone()));
                pr
            }
        };
        let value = radial_norm(&profile, g, spec.p, spec.beta);
        let outside = outside_mass(&phys, scaled_center, lambda * g.rho_max(), spec)?;
        // outside mass measured on f, brought to the units of λf(λ·)
        let uncovered = if spec.p.is_infinite() {
            let o = lambda.powf(1.0 - spec.beta) * outside;
            if o > 0.0 {
                o / o.max(value)
            } else {
                0.0
            }
        } else {
            let o = lambda.powf(spec.p - spec.beta * spec.p - 3.0) * outside;
            let inside = value.powf(spec.p);
            if o > 0.0 {
                o / (o + inside)
            } else {
                0.0
            }
        };
        if uncovered > opts.coverage_tol {
            return Err(Error::Coverage {
                what: format!(
                    "mixed norm (p = {}, p~ = {}, beta = {}) on the ball of radius {}",
                    spec.p,
                    spec.p_tilde,
                    spec.beta,
                    g.rho_max()
                ),
                uncovered,
            });
        }
        out.push(value);
    }
    Ok(out)
}

/// (∫₀^∞ ‖|·|^β f(ρ·)‖^p_{L^{p̃}(𝕊²)} ρ² dρ)^{1/p} on the spherical grid.
pub fn mixed_norm(f: &BoxField, g: &SphericalGrid, spec: MixedNormSpec) -> Result<f64> {
    mixed_norm_with(f, g, spec, NormOptions::default())
}

pub fn mixed_norm_with(f: &BoxField, g: &SphericalGrid, spec: MixedNormSpec, opts: NormOptions) -> Result<f64> {
    Ok(mixed_norms_dilated(f, g, &[spec], 1.0, opts)?[0])
}

/// Mixed norm of the rescaled field λ f(λ·).
pub fn mixed_norm_dilated(
    f: &BoxField,
    g: &SphericalGrid,
    spec: MixedNormSpec,
    lambda: f64,
    opts: NormOptions,
) -> Result<f64> {
    Ok(mixed_norms_dilated(f, g, &[spec], lambda, opts)?[0])
}

/// Cartesian quadrature of ‖|x|^β f‖_{L^p(box)}.
///
/// For βp < 0 the node sum is applied to |x|^{βp}(|f|^p − |f(0)|^p e^{−|x|²/2a²})
/// with a = 2h, and the subtracted term is added back in closed form.
pub fn box_weighted_norm(f: &BoxField, beta: f64, p: f64) -> Result<f64> {
    let g = *f.grid();
    let mag = f.magnitude()?;
    let origin = g.index(g.n() / 2, g.n() / 2, g.n() / 2);
    let r_of = |idx: usize| {
        let x = g.point(idx);
        (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
    };
    if p.is_infinite() {
        return Ok((0..g.len())
            .into_par_iter()
            .filter(|&i| !(beta < 0.0 && i == origin))
            .map(|i| r_of(i).powf(beta) * mag[i])
            .reduce(|| 0.0, f64::max));
    }
    let gamma = beta * p;
    if !(gamma > -3.0) {
        return Err(Error::Domain(format!("|x|^{gamma} is not locally integrable")));
    }
    let cell = g.cell_volume();
    if gamma >= 0.0 {
        let s: f64 = (0..g.len()).into_par_iter().map(|i| r_of(i).powf(gamma) * mag[i].powf(p)).sum();
        return Ok((s * cell).powf(1.0 / p));
    }
    let a = 2.0 * g.spacing();
    let g0 = mag[origin].powf(p);
    let s: f64 = (0..g.len())
        .into_par_iter()
        .filter(|&i| i != origin)
        .map(|i| {
            let r = r_of(i);
            r.powf(gamma) * (mag[i].powf(p) - g0 * (-r * r / (2.0 * a * a)).exp())
        })
        .sum();
    let closed = 2.0 * PI * (2.0 * a * a).powf((gamma + 3.0) / 2.0) * libm::tgamma((gamma + 3.0) / 2.0);
    let total = s * cell + g0 * closed;
    Ok(total.max(0.0).powf(1.0 / p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub lambda: f64,
    pub original: f64,
    pub rescaled: f64,
    /// λ^{1 − 3/p − β}, equal to 1 when β = 1 − 3/p.
    pub expected_ratio: f64,
}

/// Norms of f and of λ f(λ·) under the same spec.
pub fn scaling_check(f: &BoxField, g: &SphericalGrid, lambda: f64, spec: MixedNormSpec) -> Result<ScalingReport> {
    let opts = NormOptions::default();
    let original = mixed_norm_with(f, g, spec, opts)?;
    let rescaled = if lambda == 1.0 { original } else { mixed_norm_dilated(f, g, spec, lambda, opts)? };
    let p_term = if spec.p.is_infinite() { 0.0 } else { 3.0 / spec.p };
    Ok(ScalingReport { lambda, original, rescaled, expected_ratio: lambda.powf(1.0 - p_term - spec.beta) })
}

/// s = (2p̃ − 4)/(4 − p̃). An argument within two ulps of a rational n/d with
/// d ≤ 1000 is evaluated as that rational, so 8.0/3.0 gives s = 1 exactly.
pub fn threshold_s(p_tilde: f64) -> f64 {
    if let Some((n, d)) = small_rational(p_tilde) {
        return (2 * n - 4 * d) as f64 / (4 * d - n) as f64;
    }
    (2.0 * p_tilde - 4.0) / (4.0 - p_tilde)
}

fn small_rational(x: f64) -> Option<(i64, i64)> {
    if !x.is_finite() || x.abs() > 1e6 {
        return None;
    }
    (1..=1000i64).find_map(|d| {
        let n = (x * d as f64).round();
        ((n / d as f64 - x).abs() <= 2.0 * f64::EPSILON * x.abs()).then_some((n as i64, d))
    })
}

fn theta_domain(p_tilde: f64) -> Result<()> {
    if (2.0..4.0).contains(&p_tilde) {
        Ok(())
    } else {
        Err(Error::Domain(format!("theta needs p~ in [2, 4), got {p_tilde}")))
    }
}

/// θ₁(p̃) = s^{1 − p̃/4}; θ₁(2) = 0.
pub fn theta1(p_tilde: f64) -> Result<f64> {
    theta_domain(p_tilde)?;
    Ok(threshold_s(p_tilde).powf(1.0 - p_tilde / 4.0))
}

/// θ₂(p̃) = s^{1 − p̃/2}; θ₂(2) = 1.
pub fn theta2(p_tilde: f64) -> Result<f64> {
    theta_domain(p_tilde)?;
    if p_tilde == 2.0 {
        return Ok(1.0);
    }
    Ok(threshold_s(p_tilde).powf(1.0 - p_tilde / 2.0))
}

/// Γ₁(λ) = λ^{p̃/4 − 1} a^{p̃/4}.
pub fn gamma1(lambda: f64, a: f64, p_tilde: f64) -> f64 {
    lambda.powf(p_tilde / 4.0 - 1.0) * a.powf(p_tilde / 4.0)
}

/// Γ₂(λ) = λ^{p̃/2 − 1} b^{p̃/2}.
pub fn gamma2(lambda: f64, b: f64, p_tilde: f64) -> f64 {
    lambda.powf(p_tilde / 2.0 - 1.0) * b.powf(p_tilde / 2.0)
}

/// Γ₁, Γ₂ evaluated from their defining integrals (∫‖u^λ(ρ·)‖^k_{L^{p̃}_θ} ρ dρ)^{1/2},
/// k = p̃/2 and p̃, on the rescaled field u^λ = λu₀(λ·).
pub fn gamma_integrals(u0: &BoxField, g: &SphericalGrid, lambda: f64, p_tilde: f64) -> Result<(f64, f64)> {
    // ρ dρ = ρ^{-1}·ρ² dρ, so these are mixed norms with β = −1/k, raised to k/2
    let k1 = p_tilde / 2.0;
    let specs = [MixedNormSpec::new(k1, p_tilde, -1.0 / k1)?, MixedNormSpec::new(p_tilde, p_tilde, -1.0 / p_tilde)?];
    let v = mixed_norms_dilated(u0, g, &specs, lambda, NormOptions::default())?;
    Ok((v[0].powf(k1 / 2.0), v[1].powf(p_tilde / 2.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketReport {
    pub p_tilde: f64,
    pub a: f64,
    pub b: f64,
    pub bracket: f64,
    /// None at p̃ = 4, where θ is undefined.
    pub theta1: Option<f64>,
    pub theta2: Option<f64>,
    pub lambda_bar: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

/// [u₀]_p̃ = a^{p̃/2 − 1} b^{2 − p̃/2} with a = ‖|x|^{−2/p̃}u₀‖_{L^{p̃/2}L^{p̃}}, b = ‖|x|^{−1/p̃}u₀‖_{L^{p̃}},
/// λ̄ = a/b², and Γ₁(λ̄), Γ₂(λ̄).
pub fn bracket_norm(u0: &BoxField, g: &SphericalGrid, p_tilde: f64) -> Result<BracketReport> {
    bracket_norm_with(u0, g, p_tilde, NormOptions::default())
}

pub fn bracket_norm_with(u0: &BoxField, g: &SphericalGrid, p_tilde: f64, opts: NormOptions) -> Result<BracketReport> {
    if !(2.0..=4.0).contains(&p_tilde) {
        return Err(Error::Domain(format!("bracket norm needs p~ in [2, 4], got {p_tilde}")));
    }
    let specs = [
        MixedNormSpec::new(p_tilde / 2.0, p_tilde, -2.0 / p_tilde)?,
        MixedNormSpec::new(p_tilde, p_tilde, -1.0 / p_tilde)?,
    ];
    let v = mixed_norms_dilated(u0, g, &specs, 1.0, opts)?;
    bracket_from_parts(v[0], v[1], p_tilde)
}

/// Assemble the report from a and b.
pub fn bracket_from_parts(a: f64, b: f64, p_tilde: f64) -> Result<BracketReport> {
    let (theta1, theta2) = if p_tilde < 4.0 { (Some(theta1(p_tilde)?), Some(theta2(p_tilde)?)) } else { (None, None) };
    if b == 0.0 && a > 0.0 {
        return Err(Error::DegenerateData("b = 0 while a > 0; the rescaling lambda-bar is undefined".into()));
    }
    let bracket = a.powf(p_tilde / 2.0 - 1.0) * b.powf(2.0 - p_tilde / 2.0);
    let lambda_bar = if a == 0.0 && b == 0.0 { 1.0 } else { a / (b * b) };
    Ok(BracketReport {
        p_tilde,
        a,
        b,
        bracket,
        theta1,
        theta2,
        lambda_bar,
        gamma1: gamma1(lambda_bar, a, p_tilde),
        gamma2: gamma2(lambda_bar, b, p_tilde),
    })
}

/// t ↦ t^{(1 − 3/q)/2} ‖e^{tΔ}u₀‖_{L^q} on the given times.
pub fn caloric_profile(u0: &BoxField, q: f64, t_grid: &[f64]) -> Result<Vec<f64>> {
    if !(q > 3.0) {
        return Err(Error::Domain(format!("caloric Besov norm needs q > 3, got {q}")));
    }
    if t_grid.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
        return Err(Error::Domain("caloric times must lie in (0, 1]".into()));
    }
    let spec = u0.as_spectral()?;
    t_grid
        .iter()
        .map(|&t| {
            let v = heat_flow(&spec, t)?.into_representation(Representation::Physical)?;
            Ok(t.powf((1.0 - 3.0 / q) / 2.0) * v.norm_lp(q)?)
        })
        .collect()
}

/// max over t_grid of t^{(1 − 3/q)/2} ‖e^{tΔ}u₀‖_{L^q}.
pub fn caloric_besov_norm(u0: &BoxField, q: f64, t_grid: &[f64]) -> Result<f64> {
    Ok(caloric_profile(u0, q, t_grid)?.into_iter().fold(0.0, f64::max))
}

/// Closed form ‖G_s‖_{L^q(ℝ³)} = (4πs)^{−3(q−1)/(2q)} q^{−3/(2q)}.
pub fn gaussian_lq_norm(s: f64, q: f64) -> f64 {
    (4.0 * PI * s).powf(-3.0 * (q - 1.0) / (2.0 * q)) * q.powf(-3.0 / (2.0 * q))
}

/// Default spherical rule for a box grid.
pub fn default_sphere(g: &BoxGrid) -> Result<SphericalGrid> {
    crate::sphere::SphereSpec::for_box(g).build()
}
