//! Threshold decomposition u₀ = v₀ + w₀ of divergence-free data, its bound
//! checks, and the translated-bump family φ_K whose bracket norm decays in K.
//!
//! The threshold s = (2p̃ − 4)/(4 − p̃) refers to the rescaled datum
//! u₀^λ̄ = λ̄u₀(λ̄·), for which Γ₁ = Γ₂ = [u₀]_p̃. Since |u₀^λ̄(x)| < s exactly
//! when |u₀(λ̄x)| < s/λ̄, and the weighted norms involved are invariant
//! under this rescaling, the split is applied to u₀ itself at s/λ̄.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::gen_translated_bump;
use crate::grid::{BoxField, BoxGrid, Representation};
use crate::norms::{bracket_from_parts, mixed_norm, theta1, theta2, threshold_s, MixedNormSpec};
use crate::quadrature::fit_loglog_slope;
use crate::spectral::{leray_project, relative_divergence};
use crate::sphere::{sample_on_sphere_with, Interp, SphereSpec, SphericalGrid};

/// Pointwise partition by the Euclidean magnitude: (|u| < s part, |u| ≥ s part).
pub fn threshold_split(u0: &BoxField, s: f64) -> Result<(BoxField, BoxField)> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!("threshold must be > 0, got {s}")));
    }
    let g = *u0.grid();
    let comps = u0.components();
    let mag = u0.magnitude()?;
    let v = u0.as_physical()?;
    let vals = v.physical_values()?;
    let len = g.len();
    let mut below = vec![0.0; comps * len];
    let mut above = vec![0.0; comps * len];
    for c in 0..comps {
        for i in 0..len {
            let x = vals[c * len + i];
            if mag[i] < s {
                below[c * len + i] = x;
            } else {
                above[c * len + i] = x;
            }
        }
    }
    Ok((BoxField::from_physical(g, comps, below)?, BoxField::from_physical(g, comps, above)?))
}

/// Pre-projection bounds evaluated on the spherical samples of u₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementaryBounds {
    /// ‖|x|^{−1/2}u_{0,<s}‖_{L²L⁴} on the samples.
    pub below_norm: f64,
    /// s^{1−p̃/4}(∫‖u₀(ρ·)‖^{p̃/2}_{L^{p̃}_θ} ρdρ)^{1/2}
    pub below_bound: f64,
    /// ‖|x|^{−1/2}u_{0,≥s}‖_{L²} on the samples.
    pub above_norm: f64,
    /// s^{1−p̃/2}(∫‖u₀(ρ·)‖^{p̃}_{L^{p̃}_θ} ρdρ)^{1/2}
    pub above_bound: f64,
    pub holds: bool,
}

/// Both elementary inequalities with sample thresholding at `s`, so they hold node by node.
///
/// The second uses the p̃-th power of the angular norm; with p̃/2 there, as
/// one version of the display reads, it would not scale like its left side.
pub fn elementary_bounds(u0: &BoxField, g: &SphericalGrid, p_tilde: f64, s: f64) -> Result<ElementaryBounds> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!("threshold must be > 0, got {s}")));
    }
    let mags = sample_on_sphere_with(u0, g, Interp::Cubic)?.magnitudes();
    Ok(elementary_from_samples(&mags, g, p_tilde, s))
}

struct ShellSums {
    gamma1_sq: f64,
    gamma2_sq: f64,
    below_sq: f64,
    above_sq: f64,
}

fn shell_sums(mags: &[f64], g: &SphericalGrid, p_tilde: f64, s: f64) -> ShellSums {
    let na = g.n_angular();
    let omega = g.angular_weights();
    let mut out = ShellSums { gamma1_sq: 0.0, gamma2_sq: 0.0, below_sq: 0.0, above_sq: 0.0 };
    for (i, (&rho, &w)) in g.radial_nodes().iter().zip(g.radial_weights()).enumerate() {
        let shell = &mags[i * na..(i + 1) * na];
        let (mut full, mut low4, mut high2) = (0.0, 0.0, 0.0);
        for (m, o) in shell.iter().zip(omega) {
            full += o * m.powf(p_tilde);
            if *m < s {
                low4 += o * m.powi(4);
            } else {
                high2 += o * m * m;
            }
        }
        // ρ dρ = ρ^{-1}·ρ²dρ
        let wr = w / rho;
        out.gamma1_sq += wr * full.sqrt();
        out.gamma2_sq += wr * full;
        out.below_sq += wr * low4.sqrt();
        out.above_sq += wr * high2;
    }
    out
}

fn elementary_from_samples(mags: &[f64], g: &SphericalGrid, p_tilde: f64, s: f64) -> ElementaryBounds {
    let sums = shell_sums(mags, g, p_tilde, s);
    let below_norm = sums.below_sq.sqrt();
    let above_norm = sums.above_sq.sqrt();
    let below_bound = s.powf(1.0 - p_tilde / 4.0) * sums.gamma1_sq.sqrt();
    let above_bound = s.powf(1.0 - p_tilde / 2.0) * sums.gamma2_sq.sqrt();
    let slack = 1.0 + 1e-12;
    ElementaryBounds {
        below_norm,
        below_bound,
        above_norm,
        above_bound,
        holds: below_norm <= slack * below_bound && above_norm <= slack * above_bound,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompositionResult {
    pub p_tilde: f64,
    /// s = (2p̃ − 4)/(4 − p̃), the threshold for the rescaled datum.
    pub threshold: f64,
    pub lambda_bar: f64,
    /// s/λ̄, the threshold applied to u₀ itself.
    pub applied_threshold: f64,
    /// ε = [u₀]_p̃
    pub epsilon: f64,
    pub theta1: f64,
    pub theta2: f64,
    /// ‖|x|^{−1/2}w₀‖_{L²L⁴}
    pub w_norm: f64,
    /// ‖|x|^{−1/2}v₀‖_{L²}
    pub v_norm: f64,
    /// w_norm/(θ₁ε)
    pub implied_w: f64,
    /// v_norm/(θ₂ε)
    pub implied_v: f64,
    pub elementary: ElementaryBounds,
    /// max|v₀ + w₀ − u₀| / max|u₀|
    pub partition_error: f64,
    /// Largest relative divergence of v₀ and w₀.
    pub divergence: f64,
    #[serde(skip)]
    pub w0: Option<BoxField>,
    #[serde(skip)]
    pub v0: Option<BoxField>,
}

impl DecompositionResult {
    /// Whether both projected parts obey the bound with constant `z` (the measured projection constant).
    pub fn bounded_by(&self, z: f64) -> bool {
        self.implied_w <= z && self.implied_v <= z
    }
}

/// w₀ = ℙu_{0,<s}, v₀ = ℙ(u₀ − u_{0,<s}) with the threshold s/λ̄ applied to u₀, plus every measured bound.
pub fn decompose(u0: &BoxField, p_tilde: f64, g: &SphericalGrid) -> Result<DecompositionResult> {
    if p_tilde == 2.0 {
        return Err(Error::DegenerateData("threshold s = 0 at p~ = 2; the decomposition is degenerate".into()));
    }
    if !(p_tilde > 2.0 && p_tilde < 4.0) {
        return Err(Error::DegenerateData(format!("threshold s is undefined or negative for p~ = {p_tilde}; need 2 < p~ < 4")));
    }
    if u0.components() != 3 {
        return Err(Error::Precondition("datum must be a 3-component velocity field".into()));
    }
    let rd = relative_divergence(u0)?;
    if rd > 1e-10 {
        return Err(Error::Precondition(format!("datum not divergence-free (relative divergence {rd:.3e})")));
    }
    let s = threshold_s(p_tilde);
    let mags = sample_on_sphere_with(u0, g, Interp::Cubic)?.magnitudes();
    let sums = shell_sums(&mags, g, p_tilde, 1.0);
    let a = sums.gamma1_sq.powf(2.0 / p_tilde);
    let b = sums.gamma2_sq.powf(1.0 / p_tilde);
    let bracket = bracket_from_parts(a, b, p_tilde)?;
    if bracket.bracket == 0.0 {
        return Err(Error::DegenerateData("zero datum: [u0] = 0".into()));
    }
    let lambda_bar = bracket.lambda_bar;
    let applied = s / lambda_bar;
    let elementary = elementary_from_samples(&mags, g, p_tilde, applied);
    let (below, above) = threshold_split(u0, applied)?;
    let w0 = leray_project(&below)?.into_representation(Representation::Physical)?;
    let v0 = leray_project(&above)?.into_representation(Representation::Physical)?;
    let w_norm = mixed_norm(&w0, g, MixedNormSpec { p: 2.0, p_tilde: 4.0, beta: -0.5 })?;
    let v_norm = mixed_norm(&v0, g, MixedNormSpec { p: 2.0, p_tilde: 2.0, beta: -0.5 })?;
    let (t1, t2) = (theta1(p_tilde)?, theta2(p_tilde)?);
    let eps = bracket.bracket;
    let recon = w0.add(&v0)?.sub(u0)?;
    let partition_error = recon.max_abs()? / u0.max_abs()?;
    let divergence = relative_divergence(&w0)?.max(relative_divergence(&v0)?);
    Ok(DecompositionResult {
        p_tilde,
        threshold: s,
        lambda_bar,
        applied_threshold: applied,
        epsilon: eps,
        theta1: t1,
        theta2: t2,
        w_norm,
        v_norm,
        implied_w: w_norm / (t1 * eps),
        implied_v: v_norm / (t2 * eps),
        elementary,
        partition_error,
        divergence,
        w0: Some(w0),
        v0: Some(v0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiKFit {
    pub p_tilde: f64,
    pub ks: Vec<f64>,
    pub brackets: Vec<f64>,
    /// ‖|x|^{−1/p̃}φ_K‖_{L^{p̃}}
    pub lq_factors: Vec<f64>,
    pub bracket_slope: f64,
    pub expected_bracket_slope: f64,
    pub lq_slope: f64,
    pub expected_lq_slope: f64,
}

/// Spherical rule for a unit bump centered at distance K on the polar axis:
/// polar panels concentrated on the cap it occupies.
pub fn phi_k_sphere(g: &BoxGrid, k: f64) -> Result<SphericalGrid> {
    let cap = (1.0 / k).min(1.0).asin();
    let mut breaks: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0, 1.5].iter().map(|f| f * cap).collect();
    breaks.push(std::f64::consts::PI);
    let mut spec = SphereSpec::for_box(g);
    spec.polar_breaks = Some(breaks);
    spec.n_theta = 8;
    spec.n_phi = 32;
    spec.build()
}

/// Fit log[φ_K]_p̃ and log‖|x|^{−1/p̃}φ_K‖_{L^{p̃}} against log K for bumps φ(x − K e₃).
pub fn phi_k_slope(ks: &[f64], p_tilde: f64, g: &BoxGrid) -> Result<PhiKFit> {
    if ks.len() < 3 {
        return Err(Error::Fit(format!("phi_K fit needs at least 3 values of K, got {}", ks.len())));
    }
    if !(2.0..4.0).contains(&p_tilde) && p_tilde != 4.0 {
        return Err(Error::Domain(format!("phi_K fit needs p~ in [2, 4], got {p_tilde}")));
    }
    let rows = ks
        .par_iter()
        .map(|&k| {
            let phi = gen_translated_bump(*g, k, [0.0, 0.0, 1.0])?;
            let sg = phi_k_sphere(g, k)?;
            let a = mixed_norm(&phi, &sg, MixedNormSpec { p: p_tilde / 2.0, p_tilde, beta: -2.0 / p_tilde })?;
            let b = mixed_norm(&phi, &sg, MixedNormSpec { p: p_tilde, p_tilde, beta: -1.0 / p_tilde })?;
            Ok((bracket_from_parts(a, b, p_tilde)?.bracket, b))
        })
        .collect::<Result<Vec<_>>>()?;
    let (brackets, lq): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
    Ok(PhiKFit {
        p_tilde,
        ks: ks.to_vec(),
        bracket_slope: fit_loglog_slope(ks, &brackets)?,
        expected_bracket_slope: 0.5 - 2.0 / p_tilde,
        lq_slope: fit_loglog_slope(ks, &lq)?,
        expected_lq_slope: -1.0 / p_tilde,
        brackets,
        lq_factors: lq,
    })
}
