//! Empirical verification of the inequalities used by the small-data theory.
//!
//! Each verifier checks its preconditions, sweeps a fixed family of inputs,
//! evaluates both sides per member and reports the ratio LHS/RHS. The
//! empirical constant is the largest ratio over the family; it witnesses
//! boundedness and says nothing about sharpness.
//!
//! Weighted norms are evaluated on the origin-free spherical grid, so the
//! pure weights |x|^β (ν = 0) need no special treatment. Unweighted norms
//! with p = p̃ use the box quadrature, where Parseval holds exactly.

use std::collections::BTreeMap;

use num_rational::Rational64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{standard_family, FamilyMember, MemberKind};
use crate::grid::{BoxField, BoxGrid, Representation};
use crate::norms::{default_sphere, lambda_index, mixed_norm, shell_profile, ExponentTriple, MixedNormSpec};
use crate::picard::{duhamel_stream, HeatTrajectory, NodeNorms, Snapshots, TimeGrid};
use crate::quadrature::{fit_loglog_slope, trapezoid};
use crate::spectral::{gradient, heat_flow, leray_project, oseen_step, partial_derivative, riesz, riesz_pair, tensor_product};
use crate::sphere::{sample_on_sphere_with, Interp, SphericalGrid};

/// Largest admissible relative change of an empirical constant under grid refinement.
pub const STABILITY_TOL: f64 = 0.2;

/// ν values used for the CKN and weighted Riesz sweeps.
pub const DEFAULT_NUS: [f64; 5] = [0.0, 1e-3, 1e-1, 1.0, 10.0];

/// A family of test inputs built on one box grid.
#[derive(Debug, Clone)]
pub struct FamilyContext {
    pub grid: BoxGrid,
    pub sphere: SphericalGrid,
    pub members: Vec<FamilyMember>,
    pub description: String,
    /// Every member is multiplied by this factor before use.
    pub scale: f64,
}

impl FamilyContext {
    pub fn new(grid: BoxGrid, members: Vec<FamilyMember>, description: impl Into<String>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Domain("a test family needs at least one member".into()));
        }
        Ok(Self { grid, sphere: default_sphere(&grid)?, members, description: description.into(), scale: 1.0 })
    }

    /// The 12-member standard family.
    pub fn standard(grid: BoxGrid) -> Result<Self> {
        Self::new(grid, standard_family(), "standard family (6 gaussians, 3 bumps, 3 windowed random)")
    }

    /// Centered mollifier bumps of the given radii.
    pub fn mollifiers(grid: BoxGrid, radii: &[f64]) -> Result<Self> {
        let members = radii
            .iter()
            .map(|&radius| FamilyMember { name: format!("bump_r{radius}"), kind: MemberKind::Bump { radius } })
            .collect();
        Self::new(grid, members, format!("mollifier bumps, radii {radii:?}"))
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_sphere(mut self, sphere: SphericalGrid) -> Self {
        self.sphere = sphere;
        self
    }

    fn scalar(&self, m: &FamilyMember) -> Result<BoxField> {
        Ok(m.build(self.grid)?.scale(self.scale))
    }

    fn vector(&self, m: &FamilyMember) -> Result<BoxField> {
        Ok(m.build_vector(self.grid)?.scale(self.scale))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRatio {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stability {
    pub coarse_n: usize,
    pub fine_n: usize,
    pub coarse_max: f64,
    pub fine_max: f64,
    /// |coarse − fine| / max(coarse, fine)
    pub variation: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub inequality_id: String,
    pub params: BTreeMap<String, f64>,
    pub family: String,
    pub grid_n: usize,
    pub half_width: f64,
    /// Per member, the LHS and RHS at the sub-parameter (ν, t, operator) with the largest ratio.
    pub members: Vec<MemberRatio>,
    pub max_ratio: f64,
    /// Largest ratio over the family for each sub-parameter.
    pub sub_maxima: BTreeMap<String, f64>,
    /// Fitted log-log slopes, when the verifier produces any.
    pub slopes: BTreeMap<String, f64>,
    pub stability: Option<Stability>,
}

impl RatioReport {
    /// (max − min)/max of the sub-maxima whose key starts with `prefix`.
    pub fn sub_spread(&self, prefix: &str, skip: &[&str]) -> f64 {
        let v: Vec<f64> = self
            .sub_maxima
            .iter()
            .filter(|(k, _)| k.starts_with(prefix) && !skip.contains(&k.as_str()))
            .map(|(_, v)| *v)
            .collect();
        relative_spread(&v)
    }

    /// Fill in the refinement check against the same verifier on a finer grid.
    pub fn with_stability(mut self, fine: &RatioReport) -> Self {
        let (a, b) = (self.max_ratio, fine.max_ratio);
        let variation = relative_spread(&[a, b]);
        self.stability = Some(Stability {
            coarse_n: self.grid_n,
            fine_n: fine.grid_n,
            coarse_max: a,
            fine_max: b,
            variation,
            stable: variation < STABILITY_TOL,
        });
        self
    }
}

/// (max − min)/max of nonnegative values; 0 for an all-zero list.
pub fn relative_spread(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) {
        0.0
    } else {
        (max - min) / max
    }
}

/// LHS/RHS with the convention 0/0 = 0.
fn ratio(lhs: f64, rhs: f64) -> Result<f64> {
    if lhs == 0.0 {
        Ok(0.0)
    } else if rhs > 0.0 && lhs.is_finite() {
        Ok(lhs / rhs)
    } else {
        Err(Error::DegenerateData(format!("ratio undefined: lhs = {lhs}, rhs = {rhs}")))
    }
}

/// Per-member evaluations: (sub-parameter key, lhs, rhs).
struct Row {
    name: String,
    subs: Vec<(String, f64, f64)>,
}

fn assemble(
    id: &str,
    params: BTreeMap<String, f64>,
    ctx: &FamilyContext,
    rows: Vec<Row>,
    slopes: BTreeMap<String, f64>,
) -> Result<RatioReport> {
    let mut members = Vec::with_capacity(rows.len());
    let mut sub_maxima: BTreeMap<String, f64> = BTreeMap::new();
    for row in rows {
        let mut best: Option<MemberRatio> = None;
        for (key, lhs, rhs) in row.subs {
            let r = ratio(lhs, rhs)?;
            let e = sub_maxima.entry(key).or_insert(0.0);
            *e = e.max(r);
            if best.as_ref().map_or(true, |b| r > b.ratio) {
                best = Some(MemberRatio { name: row.name.clone(), lhs, rhs, ratio: r });
            }
        }
        members.push(best.ok_or_else(|| Error::Domain(format!("member {} produced no evaluations", row.name)))?);
    }
    let max_ratio = members.iter().map(|m| m.ratio).fold(0.0, f64::max);
    Ok(RatioReport {
        inequality_id: id.into(),
        params,
        family: ctx.description.clone(),
        grid_n: ctx.grid.n(),
        half_width: ctx.grid.half_width(),
        members,
        max_ratio,
        sub_maxima,
        slopes,
        stability: None,
    })
}

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// (ν + ρ²)^{−1/2}, or 1/ρ at ν = 0.
fn sigma(nu: f64, rho: f64) -> f64 {
    if nu == 0.0 {
        1.0 / rho
    } else {
        (nu + rho * rho).sqrt().recip()
    }
}

fn sphere_magnitudes(f: &BoxField, g: &SphericalGrid) -> Result<Vec<f64>> {
    Ok(sample_on_sphere_with(f, g, Interp::Cubic)?.magnitudes())
}

/// (∫₀^{ρmax} (w(ρ)‖f(ρ·)‖_{L^{p̃}(𝕊²)})^p ρ²dρ)^{1/p} from node magnitudes, restricted to the ball.
fn ball_mixed(mags: &[f64], g: &SphericalGrid, p: f64, p_tilde: f64, weight: impl Fn(f64) -> f64) -> f64 {
    let prof = shell_profile(mags, g, p_tilde);
    prof.iter()
        .zip(g.radial_nodes())
        .zip(g.radial_weights())
        .map(|((a, r), w)| w * (weight(*r) * a).powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

/// A named admissibility condition and whether it holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub holds: bool,
}

/// Exponents of ‖σ_ν^γ u‖_{L^r} ≤ C‖σ_ν^α ∇u‖^a_{L²}‖σ_ν^β u‖^{1−a}_{L²}, kept exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CKNParams {
    pub r: Rational64,
    pub a: Rational64,
    pub gamma: Rational64,
    pub alpha: Rational64,
    pub beta: Rational64,
}

fn rf(x: Rational64) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

impl CKNParams {
    pub fn new(r: Rational64, a: Rational64, gamma: Rational64, alpha: Rational64, beta: Rational64) -> Self {
        Self { r, a, gamma, alpha, beta }
    }

    /// Every admissibility condition, evaluated in exact arithmetic.
    pub fn conditions(&self) -> Vec<Condition> {
        let zero = Rational64::from_integer(0);
        let one = Rational64::from_integer(1);
        let half = Rational64::new(1, 2);
        let three_halves = Rational64::new(3, 2);
        let Self { r, a, gamma, alpha, beta } = *self;
        let three_over_r = (r > zero).then(|| Rational64::from_integer(3) / r);
        let left = three_over_r.map(|t| -gamma + t);
        let mut out = vec![
            Condition { name: "r >= 0".into(), holds: r >= zero },
            Condition { name: "r > 0 so that L^r is defined".into(), holds: r > zero },
            Condition { name: "0 < a <= 1".into(), holds: a > zero && a <= one },
            Condition { name: "gamma < 3/r".into(), holds: three_over_r.map_or(false, |t| gamma < t) },
            Condition { name: "alpha < 3/2".into(), holds: alpha < three_halves },
            Condition { name: "beta < 3/2".into(), holds: beta < three_halves },
            Condition {
                name: "-gamma + 3/r = a(-alpha + 1/2) + (1-a)(-beta + 3/2)".into(),
                holds: left.map_or(false, |l| l == a * (-alpha + half) + (one - a) * (-beta + three_halves)),
            },
            Condition { name: "a*alpha + (1-a)*beta <= gamma".into(), holds: a * alpha + (one - a) * beta <= gamma },
        ];
        let boundary = left.map_or(false, |l| l == -alpha + half);
        out.push(Condition {
            name: "gamma <= a(alpha + 1) + (1-a)beta when -gamma + 3/r = -alpha + 1/2".into(),
            holds: !boundary || gamma <= a * (alpha + one) + (one - a) * beta,
        });
        out
    }

    pub fn check(&self) -> Result<()> {
        let failed: Vec<String> = self.conditions().into_iter().filter(|c| !c.holds).map(|c| c.name).collect();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(Error::Admissibility { failed })
        }
    }

    fn as_params(&self) -> BTreeMap<String, f64> {
        params(&[
            ("r", rf(self.r)),
            ("a", rf(self.a)),
            ("gamma", rf(self.gamma)),
            ("alpha", rf(self.alpha)),
            ("beta", rf(self.beta)),
        ])
    }
}

/// CKN ratios per member, maximized over the ν list; sub-maxima keyed "nu=…".
pub fn verify_ckn(params: &CKNParams, nus: &[f64], ctx: &FamilyContext) -> Result<RatioReport> {
    params.check()?;
    if nus.is_empty() || nus.iter().any(|&nu| !(nu >= 0.0)) {
        return Err(Error::Domain("nu values must be >= 0 and nonempty".into()));
    }
    let (r, a) = (rf(params.r), rf(params.a));
    let (gamma, alpha, beta) = (rf(params.gamma), rf(params.alpha), rf(params.beta));
    let g = &ctx.sphere;
    let rows = ctx
        .members
        .par_iter()
        .map(|m| {
            let u = ctx.scalar(m)?;
            let mu = sphere_magnitudes(&u, g)?;
            let mg = sphere_magnitudes(&gradient(&u)?, g)?;
            let ur: Vec<f64> = mu.iter().map(|v| v.powf(r)).collect();
            let u2: Vec<f64> = mu.iter().map(|v| v * v).collect();
            let g2: Vec<f64> = mg.iter().map(|v| v * v).collect();
            let subs = nus
                .iter()
                .map(|&nu| {
                    let lhs = g.integrate(&ur, |rho| sigma(nu, rho).powf(gamma * r)).powf(1.0 / r);
                    let grad = g.integrate(&g2, |rho| sigma(nu, rho).powf(2.0 * alpha)).sqrt();
                    let low = g.integrate(&u2, |rho| sigma(nu, rho).powf(2.0 * beta)).sqrt();
                    (format!("nu={nu:e}"), lhs, grad.powf(a) * low.powf(1.0 - a))
                })
                .collect();
            Ok(Row { name: m.name.clone(), subs })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut p = params.as_params();
    p.insert("nu_count".into(), nus.len() as f64);
    assemble("ckn", p, ctx, rows, BTreeMap::new())
}

/// Decay exponent (extra + |η| + 3/p − 3/q + α − β)/2 after checking the shared conditions.
fn decay_exponent(e_in: ExponentTriple, e_out: ExponentTriple, eta: [u32; 3], extra: f64) -> Result<f64> {
    let (alpha, p, pt) = (e_in.alpha, e_in.p, e_in.p_tilde);
    let (beta, q, qt) = (e_out.alpha, e_out.p, e_out.p_tilde);
    let inv = |x: f64| if x.is_infinite() { 0.0 } else { 1.0 / x };
    let order = (eta[0] + eta[1] + eta[2]) as f64;
    let kappa = (extra + order + 3.0 * inv(p) - 3.0 * inv(q) + alpha - beta) / 2.0;
    let mut failed = Vec::new();
    if !(1.0 <= p && p <= q) {
        failed.push(format!("1 <= p <= q (p = {p}, q = {q})"));
    }
    if !(1.0 <= pt && pt <= qt) {
        failed.push(format!("1 <= p~ <= q~ (p~ = {pt}, q~ = {qt})"));
    }
    if !(beta > -3.0 * inv(q)) {
        failed.push(format!("beta > -3/q (beta = {beta}, q = {q})"));
    }
    // the unweighted endpoint p = 1, α = 0 is the classical L¹ → L^q bound
    if !(alpha < 3.0 - 3.0 * inv(p)) && !(p == 1.0 && alpha == 0.0) {
        failed.push(format!("alpha < 3 - 3/p (alpha = {alpha}, p = {p})"));
    }
    if !(lambda_index(e_in) >= lambda_index(e_out) - 1e-12) {
        failed.push(format!(
            "Lambda(alpha,p,p~) >= Lambda(beta,q,q~) ({} < {})",
            lambda_index(e_in),
            lambda_index(e_out)
        ));
    }
    let decay_ok = if extra > 0.0 { kappa > 0.0 } else { kappa >= -1e-12 };
    if !decay_ok {
        let which = if extra > 0.0 { "1 + |eta| + 3/p - 3/q + alpha - beta > 0" } else { "|eta| + 3/p - 3/q + alpha - beta >= 0" };
        failed.push(format!("{which} (value {})", 2.0 * kappa));
    }
    if failed.is_empty() {
        Ok(kappa.max(0.0))
    } else {
        Err(Error::Precondition(failed.join("; ")))
    }
}

fn spec_of(e: ExponentTriple) -> MixedNormSpec {
    MixedNormSpec { p: e.p, p_tilde: e.p_tilde, beta: e.alpha }
}

fn decay_sweep(
    id: &str,
    e_in: ExponentTriple,
    e_out: ExponentTriple,
    eta: [u32; 3],
    ctx: &FamilyContext,
    t_grid: &[f64],
    oseen: bool,
) -> Result<RatioReport> {
    let kappa = decay_exponent(e_in, e_out, eta, if oseen { 1.0 } else { 0.0 })?;
    if t_grid.is_empty() || t_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::Domain("decay times must be positive and nonempty".into()));
    }
    let (s_in, s_out) = (spec_of(e_in), spec_of(e_out));
    s_in.validate()?;
    s_out.validate()?;
    let g = &ctx.sphere;
    let eval = |m: &FamilyMember| -> Result<(Row, Vec<f64>, f64)> {
        let data = if oseen { tensor_product(&ctx.vector(m)?, &ctx.vector(m)?)? } else { ctx.scalar(m)? };
        let rhs = mixed_norm(&data, g, s_in)?;
        let spec = data.into_representation(Representation::Spectral)?;
        let mut raw = Vec::with_capacity(t_grid.len());
        let mut subs = Vec::with_capacity(t_grid.len());
        for &t in t_grid {
            let flowed = if oseen { oseen_step(&spec, t)? } else { heat_flow(&spec, t)? };
            let v = partial_derivative(&flowed, eta)?;
            let n = mixed_norm(&v, g, s_out)?;
            raw.push(n);
            subs.push((format!("t={t:.4}"), n * t.powf(kappa), rhs));
        }
        Ok((Row { name: m.name.clone(), subs }, raw, rhs))
    };
    // the tensor data of the Oseen sweep is nine components; evaluate members one at a time
    let evaluated: Vec<(Row, Vec<f64>, f64)> = if oseen {
        ctx.members.iter().map(eval).collect::<Result<_>>()?
    } else {
        ctx.members.par_iter().map(eval).collect::<Result<_>>()?
    };
    let mut slopes = BTreeMap::new();
    if t_grid.len() >= 2 {
        for (row, raw, _) in &evaluated {
            if raw.iter().all(|v| *v > 0.0) {
                slopes.insert(format!("member:{}", row.name), fit_loglog_slope(t_grid, raw)?);
            }
        }
        let envelope: Vec<f64> = (0..t_grid.len())
            .map(|i| evaluated.iter().filter(|(_, _, rhs)| *rhs > 0.0).map(|(_, raw, rhs)| raw[i] / rhs).fold(0.0, f64::max))
            .collect();
        if envelope.iter().all(|v| *v > 0.0) {
            slopes.insert("envelope".into(), fit_loglog_slope(t_grid, &envelope)?);
        }
    }
    let p = params(&[
        ("alpha", e_in.alpha),
        ("p", e_in.p),
        ("p_tilde", e_in.p_tilde),
        ("beta", e_out.alpha),
        ("q", e_out.p),
        ("q_tilde", e_out.p_tilde),
        ("eta_order", (eta[0] + eta[1] + eta[2]) as f64),
        ("decay_exponent", kappa),
    ]);
    assemble(id, p, ctx, evaluated.into_iter().map(|e| e.0).collect(), slopes)
}

/// t^κ‖|x|^β ∂^η e^{tΔ}u₀‖_{L^q L^{q̃}} / ‖|x|^α u₀‖_{L^p L^{p̃}} with κ = (|η| + 3/p − 3/q + α − β)/2.
/// Slopes: "member:<name>" fits log‖…‖ against log t per member; "envelope" fits the family maximum of the unweighted ratio.
pub fn verify_heat_decay(
    e_in: ExponentTriple,
    e_out: ExponentTriple,
    eta: [u32; 3],
    ctx: &FamilyContext,
    t_grid: &[f64],
) -> Result<RatioReport> {
    decay_sweep("heat_decay", e_in, e_out, eta, ctx, t_grid, false)
}

/// As [`verify_heat_decay`] for e^{tΔ}ℙ∇·F with F = u⊗u built from the divergence-free lift of each member,
/// and κ = (1 + |η| + 3/p − 3/q + α − β)/2.
pub fn verify_oseen_decay(
    e_in: ExponentTriple,
    e_out: ExponentTriple,
    eta: [u32; 3],
    ctx: &FamilyContext,
    t_grid: &[f64],
) -> Result<RatioReport> {
    decay_sweep("oseen_decay", e_in, e_out, eta, ctx, t_grid, true)
}

fn spacetime_sweep(
    id: &str,
    e_in: ExponentTriple,
    e_out: ExponentTriple,
    r: f64,
    ctx: &FamilyContext,
    times: &TimeGrid,
    enforce_p_lt_r: bool,
) -> Result<RatioReport> {
    let (alpha, p) = (e_in.alpha, e_in.p);
    let (beta, q) = (e_out.alpha, e_out.p);
    let mut failed = Vec::new();
    if !(r > 1.0 && r.is_finite()) {
        failed.push(format!("1 < r < inf (r = {r})"));
    }
    let balance = alpha + 3.0 / p - beta - 3.0 / q - 2.0 / r;
    if balance.abs() > 1e-12 {
        failed.push(format!("alpha + 3/p = beta + 3/q + 2/r (residual {balance:.3e})"));
    }
    if enforce_p_lt_r && !(p < r) {
        failed.push(format!("p < r (p = {p}, r = {r})"));
    }
    if !(beta > -3.0 / q) {
        failed.push(format!("beta > -3/q (beta = {beta}, q = {q})"));
    }
    if !(alpha < 3.0 - 3.0 / p) {
        failed.push(format!("alpha < 3 - 3/p (alpha = {alpha}, p = {p})"));
    }
    if !(1.0 <= e_in.p_tilde && e_in.p_tilde <= e_out.p_tilde) {
        failed.push(format!("1 <= p~ <= q~ (p~ = {}, q~ = {})", e_in.p_tilde, e_out.p_tilde));
    }
    if !(lambda_index(e_in) >= lambda_index(e_out) - 1e-12) {
        failed.push("Lambda(alpha,p,p~) >= Lambda(beta,q,q~)".into());
    }
    if !failed.is_empty() {
        return Err(Error::Precondition(failed.join("; ")));
    }
    let (s_in, s_out) = (spec_of(e_in), spec_of(e_out));
    let t = times.nodes();
    let g = &ctx.sphere;
    let rows = ctx
        .members
        .par_iter()
        .map(|m| {
            let u = ctx.scalar(m)?;
            let rhs = mixed_norm(&u, g, s_in)?;
            let spec = u.into_representation(Representation::Spectral)?;
            let pw = t
                .iter()
                .map(|&ti| Ok(mixed_norm(&heat_flow(&spec, ti)?, g, s_out)?.powf(r)))
                .collect::<Result<Vec<f64>>>()?;
            let lhs = trapezoid(t, &pw).powf(1.0 / r);
            Ok(Row { name: m.name.clone(), subs: vec![("all".into(), lhs, rhs)] })
        })
        .collect::<Result<Vec<_>>>()?;
    let p = params(&[
        ("alpha", alpha),
        ("p", p),
        ("p_tilde", e_in.p_tilde),
        ("beta", beta),
        ("q", q),
        ("q_tilde", e_out.p_tilde),
        ("r", r),
        ("t_max", times.t_max()),
    ]);
    assemble(id, p, ctx, rows, BTreeMap::new())
}

/// ‖|x|^β e^{tΔ}u₀‖_{L^r(0,T; L^q L^{q̃})} / ‖|x|^α u₀‖_{L^p L^{p̃}}, time integral by the trapezoid rule on `times`.
pub fn verify_spacetime_heat(
    e_in: ExponentTriple,
    e_out: ExponentTriple,
    r: f64,
    ctx: &FamilyContext,
    times: &TimeGrid,
) -> Result<RatioReport> {
    spacetime_sweep("spacetime_heat", e_in, e_out, r, ctx, times, true)
}

/// The same sweep with p = r admitted, for recording how the boundary case behaves.
pub fn explore_spacetime_boundary(
    e_in: ExponentTriple,
    e_out: ExponentTriple,
    r: f64,
    ctx: &FamilyContext,
    times: &TimeGrid,
) -> Result<RatioReport> {
    spacetime_sweep("spacetime_heat_boundary", e_in, e_out, r, ctx, times, false)
}

/// ‖B(u,v)‖_{L^r_t L^q_x} / (‖u‖‖v‖) for heat flows of neighbouring members (i, i+1 mod N).
/// The member ratio is the larger of the two orders, which makes it symmetric in (u, v).
pub fn verify_bilinear(q: f64, r: f64, ctx: &FamilyContext, times: &TimeGrid) -> Result<RatioReport> {
    if !(q > 3.0 && q.is_finite() && r > 2.0 && r.is_finite()) || (2.0 / r + 3.0 / q - 1.0).abs() > 1e-12 {
        return Err(Error::Precondition(format!("need 3 < q < inf, 2 < r < inf and 2/r + 3/q = 1, got q = {q}, r = {r}")));
    }
    let n = ctx.members.len();
    let fields = ctx.members.iter().map(|m| ctx.vector(m)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(n);
    // trajectories are large; pairs are evaluated one at a time with parallel transforms inside
    for i in 0..n {
        let j = (i + 1) % n;
        rows.push(bilinear_pair(&fields[i], &fields[j], q, r, times, format!("{}+{}", ctx.members[i].name, ctx.members[j].name))?);
    }
    assemble("bilinear", params(&[("q", q), ("r", r), ("t_max", times.t_max())]), ctx, rows, BTreeMap::new())
}

fn bilinear_pair(u0: &BoxField, v0: &BoxField, q: f64, r: f64, times: &TimeGrid, name: String) -> Result<Row> {
    let u = HeatTrajectory::new(u0, times.clone())?;
    let v = HeatTrajectory::new(v0, times.clone())?;
    let nu = NodeNorms::of(&u, q)?.lr_lq(r);
    let nv = NodeNorms::of(&v, q)?.lr_lq(r);
    let mut uv = Vec::with_capacity(times.len());
    let mut vu = Vec::with_capacity(times.len());
    duhamel_stream(&u, &v, true, |_, b, bt| {
        uv.push(b.to_physical()?.norm_lp(q)?);
        vu.push(bt.expect("transpose requested").to_physical()?.norm_lp(q)?);
        Ok(())
    })?;
    let t = u.times().nodes();
    let lr = |vals: &[f64]| trapezoid(t, &vals.iter().map(|x| x.powf(r)).collect::<Vec<_>>()).powf(1.0 / r);
    let rhs = nu * nv;
    Ok(Row { name, subs: vec![("order=uv".into(), lr(&uv), rhs), ("order=vu".into(), lr(&vu), rhs)] })
}

/// Riesz operators R_j (j = 1, 2, 3) and R_jR_k (j ≤ k), with display labels.
fn riesz_family(f: &BoxField) -> Result<Vec<(String, BoxField)>> {
    let mut out = Vec::with_capacity(9);
    for j in 0..3 {
        out.push((format!("R{}", j + 1), riesz(f, j)?));
    }
    for j in 0..3 {
        for k in j..3 {
            out.push((format!("R{}R{}", j + 1, k + 1), riesz_pair(f, j, k)?));
        }
    }
    Ok(out)
}

/// ‖Tf‖_{L^p L^{p̃}} / ‖f‖_{L^p L^{p̃}} over T ∈ {R_j, R_jR_k}. For p = p̃ the box L^p norm is used;
/// otherwise the spherical grid restricted to the ball B(0, L − h).
pub fn verify_riesz_mixed(p: f64, p_tilde: f64, ctx: &FamilyContext) -> Result<RatioReport> {
    if !(p > 1.0 && p.is_finite() && p_tilde > 1.0 && p_tilde.is_finite()) {
        return Err(Error::Precondition(format!("need 1 < p, p~ < inf, got p = {p}, p~ = {p_tilde}")));
    }
    let g = &ctx.sphere;
    let norm = |f: &BoxField| -> Result<f64> {
        if p == p_tilde {
            f.norm_lp(p)
        } else {
            Ok(ball_mixed(&sphere_magnitudes(f, g)?, g, p, p_tilde, |_| 1.0))
        }
    };
    let rows = ctx
        .members
        .par_iter()
        .map(|m| {
            let f = ctx.scalar(m)?;
            let rhs = norm(&f)?;
            let subs = riesz_family(&f.to_spectral()?)?
                .into_iter()
                .map(|(label, tf)| Ok((format!("op={label}"), norm(&tf.to_physical()?)?, rhs)))
                .collect::<Result<Vec<_>>>()?;
            Ok(Row { name: m.name.clone(), subs })
        })
        .collect::<Result<Vec<_>>>()?;
    assemble("riesz_mixed", params(&[("p", p), ("p_tilde", p_tilde)]), ctx, rows, BTreeMap::new())
}

/// ‖w R_j f‖_{L^p} / ‖w f‖_{L^p} with w = σ_ν^{−β} (w = |x|^β at ν = 0), for −3/p < β < 3 − 3/p.
/// β = 0 is evaluated with the box quadrature and ignores ν.
pub fn verify_riesz_weighted(p: f64, beta: f64, nus: &[f64], ctx: &FamilyContext) -> Result<RatioReport> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::Precondition(format!("need 1 < p < inf, got p = {p}")));
    }
    if !(beta > -3.0 / p && beta < 3.0 - 3.0 / p) {
        return Err(Error::Precondition(format!("-3/p < beta < 3 - 3/p violated (beta = {beta}, p = {p})")));
    }
    if nus.is_empty() || nus.iter().any(|&nu| !(nu >= 0.0)) {
        return Err(Error::Domain("nu values must be >= 0 and nonempty".into()));
    }
    let g = &ctx.sphere;
    let rows = ctx
        .members
        .par_iter()
        .map(|m| {
            let f = ctx.scalar(m)?;
            let fs = f.to_spectral()?;
            let ops = (0..3).map(|j| Ok((format!("R{}", j + 1), riesz(&fs, j)?.to_physical()?))).collect::<Result<Vec<_>>>()?;
            let mut subs = Vec::new();
            if beta == 0.0 {
                let rhs = f.norm_lp(p)?;
                for (label, tf) in &ops {
                    subs.push((format!("op={label}"), tf.norm_lp(p)?, rhs));
                }
            } else {
                let mf = sphere_magnitudes(&f, g)?;
                let mops = ops.iter().map(|(l, tf)| Ok((l.clone(), sphere_magnitudes(tf, g)?))).collect::<Result<Vec<_>>>()?;
                for &nu in nus {
                    let w = |rho: f64| sigma(nu, rho).powf(-beta);
                    let rhs = ball_mixed(&mf, g, p, p, w);
                    for (label, mt) in &mops {
                        subs.push((format!("nu={nu:e},op={label}"), ball_mixed(mt, g, p, p, w), rhs));
                    }
                }
            }
            Ok(Row { name: m.name.clone(), subs })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = assemble("riesz_weighted", params(&[("p", p), ("beta", beta)]), ctx, rows, BTreeMap::new())?;
    report.params.insert("nu_count".into(), if beta == 0.0 { 0.0 } else { nus.len() as f64 });
    Ok(report)
}

/// ‖|x|^β ℙF‖_{L^p L^{p̃}} / ‖|x|^β F‖_{L^p L^{p̃}} for F ∈ {e₁f, (f, f, f), curl lift of f}, on the ball B(0, L − h).
/// The curl lift is divergence-free and fixes the ratio at 1 up to round-off, so the measured constant is ≥ 1.
pub fn verify_leray_weighted(spec: MixedNormSpec, ctx: &FamilyContext) -> Result<RatioReport> {
    spec.validate()?;
    let g = &ctx.sphere;
    let norm = |f: &BoxField| -> Result<f64> {
        Ok(ball_mixed(&sphere_magnitudes(f, g)?, g, spec.p, spec.p_tilde, |rho| rho.powf(spec.beta)))
    };
    let rows = ctx
        .members
        .par_iter()
        .map(|m| {
            let f = ctx.scalar(m)?;
            let fv = f.physical_values()?;
            let len = ctx.grid.len();
            let mut e1 = fv.to_vec();
            e1.resize(3 * len, 0.0);
            let diag = fv.iter().cycle().take(3 * len).copied().collect();
            let fields = [
                ("field=e1f", BoxField::from_physical(ctx.grid, 3, e1)?),
                ("field=fff", BoxField::from_physical(ctx.grid, 3, diag)?),
                ("field=curl", ctx.vector(m)?),
            ];
            let subs = fields
                .into_iter()
                .map(|(label, v)| {
                    let pv = leray_project(&v)?.into_representation(Representation::Physical)?;
                    Ok((label.to_string(), norm(&pv)?, norm(&v)?))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Row { name: m.name.clone(), subs })
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(
        "leray_weighted",
        params(&[("p", spec.p), ("p_tilde", spec.p_tilde), ("beta", spec.beta)]),
        ctx,
        rows,
        BTreeMap::new(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::log_space;

    fn rat(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    fn small_ctx() -> FamilyContext {
        let g = BoxGrid::new(32, 8.0).unwrap();
        let members = vec![
            FamilyMember { name: "g1".into(), kind: MemberKind::Gaussian { s: 1.0, center: [0.0; 3] } },
            FamilyMember { name: "g_off".into(), kind: MemberKind::Gaussian { s: 0.5, center: [1.0, -0.5, 0.5] } },
            FamilyMember { name: "bump".into(), kind: MemberKind::Bump { radius: 3.0 } },
        ];
        FamilyContext::new(g, members, "test family").unwrap()
    }

    fn zero_ctx() -> FamilyContext {
        small_ctx().with_scale(0.0)
    }

    #[test]
    fn ckn_admissibility_examples() {
        let first = CKNParams::new(rat(8, 3), rat(7, 8), rat(1, 1), rat(1, 2), rat(1, 2));
        assert!(first.check().is_ok());
        let fourth = CKNParams::new(rat(3, 1), rat(2, 3), rat(2, 3), rat(1, 2), rat(1, 2));
        assert!(fourth.check().is_ok());
        let bad = CKNParams::new(rat(3, 1), rat(2, 3), rat(1, 1), rat(1, 2), rat(1, 2));
        match bad.check() {
            Err(Error::Admissibility { failed }) => {
                assert!(failed.iter().any(|f| f.starts_with("gamma < 3/r")));
                assert!(failed.iter().any(|f| f.starts_with("-gamma + 3/r = a(")));
            }
            other => panic!("{other:?}"),
        }
        let a_zero = CKNParams::new(rat(2, 1), rat(0, 1), rat(0, 1), rat(0, 1), rat(0, 1));
        assert!(a_zero.conditions().iter().any(|c| c.name == "0 < a <= 1" && !c.holds));
    }

    #[test]
    fn ckn_boundary_extra_condition() {
        // -γ + 3/r = -α + 1/2 with a = 1: the extra condition γ ≤ α + 1 decides
        let ok = CKNParams::new(rat(6, 1), rat(1, 1), rat(0, 1), rat(0, 1), rat(0, 1));
        assert!(ok.conditions().iter().all(|c| c.holds), "{:?}", ok.conditions());
        let c4 = CKNParams::new(rat(3, 2), rat(1, 1), rat(1, 2), rat(-1, 1), rat(0, 1)).conditions();
        assert!(c4.iter().all(|c| c.holds == !c.name.starts_with("gamma <= a(alpha + 1)")), "{c4:?}");
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(200))]
        #[test]
        fn ckn_checker_is_total(r in -3i64..12, rd in 1i64..4, a in -2i64..6, g in -6i64..6, al in -4i64..5, be in -4i64..5) {
            let p = CKNParams::new(rat(r, rd), rat(a, 4), rat(g, 3), rat(al, 2), rat(be, 2));
            let conds = p.conditions();
            proptest::prop_assert_eq!(conds.len(), 9);
            match p.check() {
                Ok(()) => proptest::prop_assert!(conds.iter().all(|c| c.holds)),
                Err(Error::Admissibility { failed }) => {
                    proptest::prop_assert!(!failed.is_empty());
                    for f in failed {
                        proptest::prop_assert!(conds.iter().any(|c| c.name == f && !c.holds));
                    }
                }
                Err(e) => proptest::prop_assert!(false, "{e}"),
            }
        }
    }

    #[test]
    fn ckn_sweep_zero_and_homogeneity() {
        let p = CKNParams::new(rat(3, 1), rat(2, 3), rat(2, 3), rat(1, 2), rat(1, 2));
        let ctx = small_ctx();
        let a = verify_ckn(&p, &DEFAULT_NUS, &ctx).unwrap();
        assert_eq!(a.members.len(), 3);
        assert!(a.max_ratio.is_finite() && a.max_ratio > 0.0);
        assert_eq!(a.sub_maxima.len(), DEFAULT_NUS.len());
        let b = verify_ckn(&p, &DEFAULT_NUS, &ctx.clone().with_scale(2.0)).unwrap();
        assert!((a.max_ratio - b.max_ratio).abs() <= 1e-12 * a.max_ratio);
        let z = verify_ckn(&p, &DEFAULT_NUS, &zero_ctx()).unwrap();
        assert_eq!(z.max_ratio, 0.0);
    }

    #[test]
    fn decay_preconditions_named() {
        let e_in = ExponentTriple::new(0.0, 2.0, 2.0);
        let err = verify_heat_decay(e_in, ExponentTriple::new(0.0, 1.0, 1.0), [0; 3], &small_ctx(), &[0.5]).unwrap_err();
        assert!(err.to_string().contains("1 <= p <= q"), "{err}");
        let err = verify_heat_decay(
            ExponentTriple::new(3.0, 2.0, 2.0),
            ExponentTriple::new(0.0, 2.0, 2.0),
            [0; 3],
            &small_ctx(),
            &[0.5],
        )
        .unwrap_err();
        assert!(err.to_string().contains("alpha < 3 - 3/p"), "{err}");
        let err = verify_heat_decay(
            ExponentTriple::new(0.0, 2.0, 2.0),
            ExponentTriple::new(1.0, 2.0, 2.0),
            [0; 3],
            &small_ctx(),
            &[0.5],
        )
        .unwrap_err();
        assert!(err.to_string().contains("Lambda"), "{err}");
    }

    #[test]
    fn heat_same_space_contracts() {
        let e = ExponentTriple::new(0.0, 2.0, 2.0);
        let rep = verify_heat_decay(e, e, [0; 3], &small_ctx(), &log_space(0.05, 1.0, 5)).unwrap();
        assert_eq!(rep.params["decay_exponent"], 0.0);
        assert!(rep.max_ratio <= 1.0 + 1e-2, "{}", rep.max_ratio);
    }

    #[test]
    fn heat_gaussian_slope_matches_closed_form() {
        // e^{tΔ}G_s = G_{s+t}: ‖·‖_{L²} ∝ (s + t)^{−3/4}, so the log-log secant slope between t₀ and t₁ is known
        let g = BoxGrid::new(64, 12.0).unwrap();
        let members = vec![FamilyMember { name: "g".into(), kind: MemberKind::Gaussian { s: 0.5, center: [0.0; 3] } }];
        let ctx = FamilyContext::new(g, members, "single gaussian").unwrap();
        let t = [0.5, 2.0];
        let rep = verify_heat_decay(ExponentTriple::new(0.0, 1.0, 1.0), ExponentTriple::new(0.0, 2.0, 2.0), [0; 3], &ctx, &t).unwrap();
        let exact = -0.75 * (2.5f64 / 1.0).ln() / 4.0f64.ln();
        let got = rep.slopes["member:g"];
        assert!((got - exact).abs() < 0.01 * exact.abs(), "{got} vs {exact}");
        assert_eq!(rep.params["decay_exponent"], 0.75);
    }

    #[test]
    fn oseen_sweep_finite_and_homogeneous() {
        let e_in = ExponentTriple::new(0.0, 2.0, 2.0);
        let e_out = ExponentTriple::new(0.0, 4.0, 4.0);
        let ctx = small_ctx();
        let t = [0.25, 0.5, 1.0];
        let a = verify_oseen_decay(e_in, e_out, [0; 3], &ctx, &t).unwrap();
        assert!((a.params["decay_exponent"] - 0.875).abs() < 1e-15);
        assert!(a.max_ratio.is_finite() && a.max_ratio > 0.0);
        let b = verify_oseen_decay(e_in, e_out, [0; 3], &ctx.clone().with_scale(2.0), &t).unwrap();
        assert!((a.max_ratio - b.max_ratio).abs() <= 1e-12 * a.max_ratio);
    }

    #[test]
    fn spacetime_balance_and_zero() {
        let e_in = ExponentTriple::new(-0.5, 2.0, 4.0);
        let e_out = ExponentTriple::new(0.0, 4.0, 4.0);
        let times = TimeGrid::graded(2.0, 8, 2.0).unwrap();
        let rep = verify_spacetime_heat(e_in, e_out, 8.0, &small_ctx(), &times).unwrap();
        assert!(rep.max_ratio.is_finite() && rep.max_ratio > 0.0);
        assert_eq!(verify_spacetime_heat(e_in, e_out, 8.0, &zero_ctx(), &times).unwrap().max_ratio, 0.0);
        let err = verify_spacetime_heat(e_in, e_out, 6.0, &small_ctx(), &times).unwrap_err();
        assert!(err.to_string().contains("alpha + 3/p = beta + 3/q + 2/r"));
        // p = r = 2 is a balanced boundary case: rejected by the verifier, admitted by the explorer
        let (bi, bo) = (ExponentTriple::new(0.0, 2.0, 2.0), ExponentTriple::new(-1.0, 2.0, 2.0));
        let err = verify_spacetime_heat(bi, bo, 2.0, &small_ctx(), &times).unwrap_err();
        assert!(err.to_string().contains("p < r"), "{err}");
    }

    #[test]
    fn bilinear_zero_symmetry_and_scaling() {
        let ctx = small_ctx();
        let times = TimeGrid::graded(0.5, 4, 2.0).unwrap();
        let rep = verify_bilinear(4.0, 8.0, &ctx, &times).unwrap();
        assert!(rep.max_ratio.is_finite() && rep.max_ratio > 0.0);
        let mut swapped = ctx.clone();
        swapped.members.reverse();
        let rev = verify_bilinear(4.0, 8.0, &swapped, &times).unwrap();
        // pair (a, b) in one ordering appears as (b, a) in the other
        for m in &rep.members {
            let parts: Vec<&str> = m.name.split('+').collect();
            let other = rev.members.iter().find(|x| x.name == format!("{}+{}", parts[1], parts[0])).unwrap();
            assert!((m.ratio - other.ratio).abs() <= 1e-12 * m.ratio, "{} {}", m.ratio, other.ratio);
        }
        let scaled = verify_bilinear(4.0, 8.0, &ctx.clone().with_scale(2.0), &times).unwrap();
        assert!((scaled.max_ratio - rep.max_ratio).abs() <= 1e-12 * rep.max_ratio);
        assert_eq!(verify_bilinear(4.0, 8.0, &zero_ctx(), &times).unwrap().max_ratio, 0.0);
        assert!(verify_bilinear(4.0, 6.0, &ctx, &times).is_err());
    }

    #[test]
    fn riesz_parseval_case() {
        let rep = verify_riesz_mixed(2.0, 2.0, &small_ctx()).unwrap();
        assert!(rep.max_ratio <= 1.0 + 1e-10, "{}", rep.max_ratio);
        let w = verify_riesz_weighted(2.0, 0.0, &DEFAULT_NUS, &small_ctx()).unwrap();
        assert!(w.max_ratio <= 1.0 + 1e-10);
    }

    #[test]
    fn riesz_radial_input_angular_factor() {
        // radial f gives R_j f = x̂_j h(|x|), so the (2,4) and (2,2) ratios differ by
        // ‖x̂_j‖_{L⁴(𝕊²)}/‖x̂_j‖_{L²(𝕊²)} · (4π)^{1/4} = √3 · 5^{−1/4}
        let g = BoxGrid::new(64, 16.0).unwrap();
        let members = vec![FamilyMember { name: "g".into(), kind: MemberKind::Gaussian { s: 1.0, center: [0.0; 3] } }];
        let ctx = FamilyContext::new(g, members, "radial gaussian").unwrap();
        let mixed = verify_riesz_mixed(2.0, 4.0, &ctx).unwrap();
        let plain = verify_riesz_mixed(2.0, 2.0, &ctx).unwrap();
        let factor = 3f64.sqrt() * 5f64.powf(-0.25);
        let r1 = mixed.sub_maxima["op=R1"] / plain.sub_maxima["op=R1"];
        assert!((r1 / factor - 1.0).abs() < 0.01, "{r1} vs {factor}");
    }

    #[test]
    fn riesz_weighted_range_and_homogeneity() {
        let ctx = small_ctx();
        let err = verify_riesz_weighted(2.0, -1.5, &DEFAULT_NUS, &ctx).unwrap_err();
        assert!(err.to_string().contains("-3/p < beta < 3 - 3/p"));
        let a = verify_riesz_weighted(2.0, -0.5, &DEFAULT_NUS, &ctx).unwrap();
        assert!(a.max_ratio.is_finite() && a.max_ratio > 0.0);
        let b = verify_riesz_weighted(2.0, -0.5, &DEFAULT_NUS, &ctx.clone().with_scale(2.0)).unwrap();
        assert!((a.max_ratio - b.max_ratio).abs() <= 1e-12 * a.max_ratio);
    }

    #[test]
    fn stability_and_spread() {
        assert_eq!(relative_spread(&[0.0, 0.0]), 0.0);
        assert!((relative_spread(&[1.0, 0.8]) - 0.2).abs() < 1e-15);
        let ctx = small_ctx();
        let a = verify_riesz_mixed(2.0, 2.0, &ctx).unwrap();
        let s = a.clone().with_stability(&a).stability.unwrap();
        assert!(s.stable && s.variation == 0.0);
        let json = serde_json::to_value(&a).unwrap();
        for key in ["inequality_id", "params", "members", "max_ratio", "stability"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn leray_constant_at_least_one() {
        let ctx = small_ctx();
        let rep = verify_leray_weighted(MixedNormSpec { p: 2.0, p_tilde: 4.0, beta: -0.5 }, &ctx).unwrap();
        assert!((rep.sub_maxima["field=curl"] - 1.0).abs() < 1e-6, "{:?}", rep.sub_maxima);
        assert!(rep.sub_maxima["field=e1f"] < 1.0);
        assert!(rep.max_ratio >= rep.sub_maxima["field=curl"]);
    }

    #[test]
    fn ckn_ratio_dilation_identity() {
        // σ_ν(√ν y) = σ_1(y)/√ν and the balance condition give ratio(u, ν) = ratio(u(√ν ·), 1)
        let g = BoxGrid::new(64, 8.0).unwrap();
        let ctx = |s: f64| {
            let m = vec![FamilyMember { name: "g".into(), kind: MemberKind::Gaussian { s, center: [0.0; 3] } }];
            FamilyContext::new(g, m, "gaussian").unwrap()
        };
        let p = CKNParams::new(rat(8, 3), rat(7, 8), rat(1, 1), rat(1, 2), rat(1, 2));
        let wide = verify_ckn(&p, &[4.0], &ctx(1.0)).unwrap().max_ratio;
        let narrow = verify_ckn(&p, &[1.0], &ctx(0.25)).unwrap().max_ratio;
        assert!((wide / narrow - 1.0).abs() < 0.01, "{wide} vs {narrow}");
    }
}
