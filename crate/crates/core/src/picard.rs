//! Mild solutions: admissible exponents, the Duhamel bilinear operator,
//! Picard iteration with contraction diagnostics, path-norm ledgers and the
//! energy identity.
//!
//! The Duhamel integral is advanced recursively: on [t_{i−1}, t_i] the
//! nonlinear term is frozen at the average of its endpoint values and the
//! exact integral ∫ e^{(t_i−s)Δ} ds = (1 − e^{−|k|²Δt})/|k|² (Δt at k = 0) is
//! applied as a multiplier, so the kernel singularity never meets a node.

use std::borrow::Cow;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BoxField, BoxGrid, Representation};
use crate::io::{read_field, write_field};
use crate::norms::{mixed_norm, MixedNormSpec};
use crate::quadrature::{cumulative_trapezoid, fit_slope, trapezoid};
use crate::spectral::{gradient_l2_squared, heat_flow, leray_divergence_products, relative_divergence};
use crate::sphere::SphereSpec;

/// Time nodes 0 = t₀ < … < t_m = t_max.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(t_max: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Domain("time grid needs at least one step".into()));
        }
        Self::from_nodes((0..=steps).map(|i| t_max * i as f64 / steps as f64).collect())
    }

    /// t_i = t_max (i/m)^power, refined near t = 0 for power > 1.
    pub fn graded(t_max: f64, steps: usize, power: f64) -> Result<Self> {
        if steps == 0 || !(power >= 1.0) {
            return Err(Error::Domain("graded time grid needs steps >= 1 and power >= 1".into()));
        }
        Self::from_nodes((0..=steps).map(|i| t_max * (i as f64 / steps as f64).powf(power)).collect())
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes[0] != 0.0 {
            return Err(Error::Domain("time grid must start at 0 and have at least two nodes".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) || !nodes.iter().all(|t| t.is_finite()) {
            return Err(Error::Domain("time nodes must be finite and strictly increasing".into()));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn t_max(&self) -> f64 {
        *self.nodes.last().expect("nonempty")
    }

    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Anything that yields a physical vector snapshot per time node.
pub trait Snapshots: Sync {
    fn times(&self) -> &TimeGrid;
    fn box_grid(&self) -> BoxGrid;
    fn snapshot(&self, i: usize) -> Result<Cow<'_, BoxField>>;
}

/// Stored physical snapshots on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: TimeGrid,
    snapshots: Vec<BoxField>,
}

impl Trajectory {
    pub fn new(times: TimeGrid, snapshots: Vec<BoxField>) -> Result<Self> {
        if snapshots.len() != times.len() {
            return Err(Error::Grid(format!("{} snapshots for {} time nodes", snapshots.len(), times.len())));
        }
        let g = *snapshots[0].grid();
        let comps = snapshots[0].components();
        if snapshots.iter().any(|s| *s.grid() != g || s.components() != comps) {
            return Err(Error::Grid("snapshots live on different grids".into()));
        }
        let snapshots = snapshots
            .into_iter()
            .map(|s| s.into_representation(Representation::Physical))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { times, snapshots })
    }

    pub fn zeros(times: TimeGrid, g: BoxGrid) -> Result<Self> {
        let z = BoxField::zeros(g, 3)?;
        let snapshots = vec![z; times.len()];
        Ok(Self { times, snapshots })
    }

    pub fn snapshots(&self) -> &[BoxField] {
        &self.snapshots
    }

    pub fn into_snapshots(self) -> Vec<BoxField> {
        self.snapshots
    }

    pub fn scale(&self, c: f64) -> Trajectory {
        Trajectory { times: self.times.clone(), snapshots: self.snapshots.iter().map(|s| s.scale(c)).collect() }
    }

    /// Largest relative divergence max|∇·u|/max|∇u| over the snapshots.
    pub fn max_relative_divergence(&self) -> Result<f64> {
        self.snapshots.iter().map(relative_divergence).try_fold(0.0, |m: f64, r| Ok(m.max(r?)))
    }
}

impl Snapshots for Trajectory {
    fn times(&self) -> &TimeGrid {
        &self.times
    }

    fn box_grid(&self) -> BoxGrid {
        *self.snapshots[0].grid()
    }

    fn snapshot(&self, i: usize) -> Result<Cow<'_, BoxField>> {
        Ok(Cow::Borrowed(&self.snapshots[i]))
    }
}

/// e^{tΔ}u₀ evaluated on demand from the stored spectrum.
#[derive(Debug, Clone)]
pub struct HeatTrajectory {
    times: TimeGrid,
    data: BoxField,
}

impl HeatTrajectory {
    pub fn new(u0: &BoxField, times: TimeGrid) -> Result<Self> {
        Ok(Self { times, data: u0.to_owned().into_representation(Representation::Spectral)? })
    }

    pub fn materialize(&self) -> Result<Trajectory> {
        let snaps = (0..self.times.len()).map(|i| Ok(self.snapshot(i)?.into_owned())).collect::<Result<Vec<_>>>()?;
        Trajectory::new(self.times.clone(), snaps)
    }
}

impl Snapshots for HeatTrajectory {
    fn times(&self) -> &TimeGrid {
        &self.times
    }

    fn box_grid(&self) -> BoxGrid {
        *self.data.grid()
    }

    fn snapshot(&self, i: usize) -> Result<Cow<'_, BoxField>> {
        Ok(Cow::Owned(heat_flow(&self.data, self.times.nodes()[i])?.into_representation(Representation::Physical)?))
    }
}

/// Valid q for a given p, with r = 2/(1 − 3/q).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleExponents {
    pub p: f64,
    pub case: u8,
    pub q_min: f64,
    pub q_min_inclusive: bool,
    /// None means q is unbounded above.
    pub q_max: Option<f64>,
    pub description: String,
    pub notes: Vec<String>,
}

impl AdmissibleExponents {
    pub fn contains(&self, q: f64) -> bool {
        let lower = if self.q_min_inclusive { q >= self.q_min } else { q > self.q_min };
        lower && q.is_finite() && self.q_max.map_or(true, |m| q < m)
    }

    /// r with 2/r + 3/q = 1; infinite at q = 3.
    pub fn r_of(q: f64) -> f64 {
        if q == 3.0 {
            f64::INFINITY
        } else {
            2.0 / (1.0 - 3.0 / q)
        }
    }

    /// A few representative admissible (q, r) pairs.
    pub fn examples(&self) -> Vec<(f64, f64)> {
        let hi = self.q_max.unwrap_or(self.q_min + 8.0);
        let mut qs = Vec::new();
        if self.q_min_inclusive {
            qs.push(self.q_min);
        }
        qs.push(0.5 * (self.q_min + hi));
        qs.into_iter().map(|q| (q, Self::r_of(q))).collect()
    }
}

pub fn admissible_exponents(p: f64) -> Result<AdmissibleExponents> {
    if !(p > 1.0 && p < 5.0) {
        return Err(Error::Domain(format!("admissible exponents need 1 < p < 5, got {p}")));
    }
    let mut notes = Vec::new();
    let out = if p <= 2.0 {
        AdmissibleExponents {
            p,
            case: 1,
            q_min: 2.0 * p / (p - 1.0),
            q_min_inclusive: true,
            q_max: None,
            description: "2p/(p-1) <= q < inf (1 < p <= 2)".into(),
            notes,
        }
    } else if p <= 3.0 {
        if p == 3.0 {
            notes.push("at p = 3 the lower endpoint q = 3 = p gives r = inf; the third case of the table excludes q = p".into());
        }
        AdmissibleExponents {
            p,
            case: 2,
            q_min: 2.0 * p / (p - 1.0),
            q_min_inclusive: true,
            q_max: Some(3.0 * p / (p - 2.0)),
            description: "2p/(p-1) <= q < 3p/(p-2) (2 < p <= 3)".into(),
            notes,
        }
    } else {
        AdmissibleExponents {
            p,
            case: 3,
            q_min: p,
            q_min_inclusive: false,
            q_max: Some(3.0 * p / (p - 2.0)),
            description: "p < q < 3p/(p-2) (3 < p < 5)".into(),
            notes,
        }
    };
    Ok(out)
}

fn check_same_times(a: &TimeGrid, b: &TimeGrid) -> Result<()> {
    if a != b {
        return Err(Error::Grid("trajectories use different time grids".into()));
    }
    Ok(())
}

/// e^{−|k|²Δt} and (1 − e^{−|k|²Δt})/|k|² per mode.
fn step_multipliers(g: &BoxGrid, dt: f64) -> (Vec<f64>, Vec<f64>) {
    (0..g.len())
        .into_par_iter()
        .map(|i| {
            let k2 = g.k_squared(i);
            if k2 == 0.0 {
                (1.0, dt)
            } else {
                let e = (-k2 * dt).exp();
                (e, -(-k2 * dt).exp_m1() / k2)
            }
        })
        .unzip()
}

/// Advance B̂ ← e^{−|k|²Δt}B̂ + Φ·(N̂_prev + N̂_next)/2 in place.
fn duhamel_step(b: &mut [Complex64], prev: &[Complex64], next: &[Complex64], mult: &(Vec<f64>, Vec<f64>)) {
    let len = mult.0.len();
    b.par_iter_mut().enumerate().for_each(|(i, z)| {
        let m = i % len;
        *z = *z * mult.0[m] + (prev[i] + next[i]) * (0.5 * mult.1[m]);
    });
}

/// Streams B(u, v) (and B(v, u) when `transpose`) node by node as spectral fields.
pub(crate) fn duhamel_stream<U: Snapshots + ?Sized, V: Snapshots + ?Sized>(
    u: &U,
    v: &V,
    transpose: bool,
    mut sink: impl FnMut(usize, &BoxField, Option<&BoxField>) -> Result<()>,
) -> Result<()> {
    check_same_times(u.times(), v.times())?;
    let g = u.box_grid();
    if g != v.box_grid() {
        return Err(Error::Grid("trajectories live on different box grids".into()));
    }
    let nodes = u.times().nodes().to_vec();
    let same = std::ptr::eq(u as *const U as *const u8, v as *const V as *const u8);
    let len = g.len();
    let mut b = vec![Complex64::new(0.0, 0.0); 3 * len];
    let mut bt = transpose.then(|| vec![Complex64::new(0.0, 0.0); 3 * len]);
    let zero = BoxField::from_spectral(g, 3, b.clone())?;
    sink(0, &zero, transpose.then_some(&zero))?;
    let terms = |i: usize| -> Result<(BoxField, Option<BoxField>)> {
        let us = u.snapshot(i)?;
        if same {
            leray_divergence_products(&us, &us, transpose)
        } else {
            let vs = v.snapshot(i)?;
            leray_divergence_products(&us, &vs, transpose)
        }
    };
    let (mut prev, mut prev_t) = terms(0)?;
    let mut cached: Option<(f64, (Vec<f64>, Vec<f64>))> = None;
    for i in 1..nodes.len() {
        let dt = nodes[i] - nodes[i - 1];
        if cached.as_ref().map_or(true, |(d, _)| (d - dt).abs() > 1e-14 * dt) {
            cached = Some((dt, step_multipliers(&g, dt)));
        }
        let mult = &cached.as_ref().expect("multipliers").1;
        let (next, next_t) = terms(i)?;
        duhamel_step(&mut b, prev.spectral_values()?, next.spectral_values()?, mult);
        if let (Some(bt), Some(p), Some(n)) = (bt.as_mut(), prev_t.as_ref(), next_t.as_ref()) {
            duhamel_step(bt, p.spectral_values()?, n.spectral_values()?, mult);
        }
        let bf = BoxField::from_spectral(g, 3, b.clone())?;
        let btf = bt.as_ref().map(|v| BoxField::from_spectral(g, 3, v.clone())).transpose()?;
        sink(i, &bf, btf.as_ref())?;
        prev = next;
        prev_t = next_t;
    }
    Ok(())
}

/// B(u, v)(t) = ∫₀ᵗ e^{(t−s)Δ} ℙ∇·(u⊗v)(s) ds on the shared time grid.
pub fn duhamel_bilinear<U: Snapshots + ?Sized, V: Snapshots + ?Sized>(u: &U, v: &V) -> Result<Trajectory> {
    let mut snaps = Vec::with_capacity(u.times().len());
    duhamel_stream(u, v, false, |_, b, _| {
        snaps.push(b.to_physical()?);
        Ok(())
    })?;
    Trajectory::new(u.times().clone(), snaps)
}

/// Per-node ‖u(t)‖_{L^q} and ‖u(t)‖_{L^∞}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeNorms {
    pub times: Vec<f64>,
    pub lq: Vec<f64>,
    pub linf: Vec<f64>,
}

impl NodeNorms {
    pub fn of_field(t: &[f64], fields: impl Iterator<Item = Result<BoxField>>, q: f64) -> Result<Self> {
        let mut lq = Vec::with_capacity(t.len());
        let mut linf = Vec::with_capacity(t.len());
        for f in fields {
            let f = f?;
            lq.push(f.norm_lp(q)?);
            linf.push(f.norm_lp(f64::INFINITY)?);
        }
        Ok(Self { times: t.to_vec(), lq, linf })
    }

    pub fn of<S: Snapshots + ?Sized>(s: &S, q: f64) -> Result<Self> {
        let t = s.times().nodes();
        Self::of_field(t, (0..t.len()).map(|i| s.snapshot(i).map(Cow::into_owned)), q)
    }

    /// (∫ ‖u‖^r_{L^q} dt)^{1/r} by the trapezoid rule; sup norm for r = ∞.
    pub fn lr_lq(&self, r: f64) -> f64 {
        if r.is_infinite() {
            return self.lq.iter().fold(0.0, |m: f64, v| m.max(*v));
        }
        let pw: Vec<f64> = self.lq.iter().map(|v| v.powf(r)).collect();
        trapezoid(&self.times, &pw).powf(1.0 / r)
    }

    /// max over nodes t > 0 of t^{1/2}‖u(t)‖_∞.
    pub fn sup_weighted_linf(&self) -> f64 {
        self.times.iter().zip(&self.linf).skip(1).fold(0.0, |m: f64, (t, v)| m.max(t.sqrt() * v))
    }

    pub fn x_norm(&self, r: f64) -> f64 {
        self.lr_lq(r) + self.sup_weighted_linf()
    }
}

/// X-norm ‖u‖_{L^r_t L^q_x} + sup_{t>0} t^{1/2}‖u‖_∞ on the grid nodes.
pub fn x_norm<S: Snapshots + ?Sized>(s: &S, q: f64, r: f64) -> Result<f64> {
    Ok(NodeNorms::of(s, q)?.x_norm(r))
}

fn x_norm_of_difference<A: Snapshots + ?Sized, B: Snapshots + ?Sized>(a: &A, b: &B, q: f64, r: f64) -> Result<f64> {
    let t = a.times().nodes();
    let diffs = (0..t.len()).map(|i| a.snapshot(i)?.sub(&*b.snapshot(i)?));
    Ok(NodeNorms::of_field(t, diffs, q)?.x_norm(r))
}

/// Path norms, energy and dissipation of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathLedger {
    pub q: f64,
    pub r: f64,
    pub times: Vec<f64>,
    pub lq: Vec<f64>,
    /// (∫₀^{t_i} ‖u‖^r_{L^q} dt)^{1/r}
    pub lr_lq_accumulated: Vec<f64>,
    /// t^{1/2}‖u(t)‖_∞
    pub weighted_linf: Vec<f64>,
    pub energy: Vec<f64>,
    /// 2∫₀ᵗ ‖∇u‖²_{L²} ds
    pub dissipation: Vec<f64>,
}

impl PathLedger {
    /// Ledger of any snapshot source; requires 2/r + 3/q = 1.
    pub fn build<S: Snapshots + ?Sized>(s: &S, q: f64, r: f64) -> Result<Self> {
        check_scaling(q, r)?;
        let times = s.times().nodes().to_vec();
        let mut lq = Vec::with_capacity(times.len());
        let mut linf = Vec::with_capacity(times.len());
        let mut energy = Vec::with_capacity(times.len());
        let mut grad = Vec::with_capacity(times.len());
        for i in 0..times.len() {
            let u = s.snapshot(i)?;
            lq.push(u.norm_lp(q)?);
            linf.push(u.norm_lp(f64::INFINITY)?);
            energy.push(u.norm_lp(2.0)?.powi(2));
            grad.push(2.0 * gradient_l2_squared(&u)?);
        }
        let pw: Vec<f64> = lq.iter().map(|v| v.powf(r)).collect();
        let lr_lq_accumulated = cumulative_trapezoid(&times, &pw).into_iter().map(|v| v.powf(1.0 / r)).collect();
        let weighted_linf = times.iter().zip(&linf).map(|(t, v)| t.sqrt() * v).collect();
        let dissipation = cumulative_trapezoid(&times, &grad);
        Ok(Self { q, r, times, lq, lr_lq_accumulated, weighted_linf, energy, dissipation })
    }

    pub fn x_norm(&self) -> f64 {
        self.lr_lq_accumulated.last().copied().unwrap_or(0.0)
            + self.weighted_linf.iter().skip(1).fold(0.0, |m: f64, v| m.max(*v))
    }

    /// |E(t) + D(t) − E(0)| / E(0) per node (0 when E(0) = 0).
    pub fn energy_defect(&self) -> Vec<f64> {
        let e0 = self.energy[0];
        self.energy
            .iter()
            .zip(&self.dissipation)
            .map(|(e, d)| if e0 == 0.0 { 0.0 } else { (e + d - e0).abs() / e0 })
            .collect()
    }
}

fn check_scaling(q: f64, r: f64) -> Result<()> {
    if !(q > 3.0) || !(r > 2.0) || (2.0 / r + 3.0 / q - 1.0).abs() > 1e-12 {
        return Err(Error::Precondition(format!("path exponents must satisfy 2/r + 3/q = 1 with q > 3, got q = {q}, r = {r}")));
    }
    Ok(())
}

/// Relative energy defect per node.
pub fn energy_check<S: Snapshots + ?Sized>(traj: &S) -> Result<Vec<f64>> {
    let times = traj.times().nodes();
    let mut energy = Vec::with_capacity(times.len());
    let mut grad = Vec::with_capacity(times.len());
    for i in 0..times.len() {
        let u = traj.snapshot(i)?;
        energy.push(u.norm_lp(2.0)?.powi(2));
        grad.push(2.0 * gradient_l2_squared(&u)?);
    }
    let d = cumulative_trapezoid(times, &grad);
    let e0 = energy[0];
    Ok(energy.iter().zip(&d).map(|(e, d)| if e0 == 0.0 { 0.0 } else { (e + d - e0).abs() / e0 }).collect())
}

/// Per-iteration differences and the constants inferred from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    /// d_n = ‖u_{n+1} − u_n‖_X, n = 1, 2, …
    pub diffs: Vec<f64>,
    /// d_{n+1}/d_n
    pub step_ratios: Vec<f64>,
    /// Geometric ratio fitted to the differences above the roundoff floor.
    pub ratio: f64,
    /// ‖u₁‖_X with u₁ = e^{tΔ}u₀.
    pub linear_norm: f64,
    /// C_X estimate ‖B(u₁, u₁)‖_X / ‖u₁‖²_X.
    pub bilinear_constant: f64,
    /// Data norm ‖|x|^α u₀‖_{X₀}, when computed.
    pub data_norm: Option<f64>,
    /// A estimate ‖u₁‖_X / ‖u₀‖_{X₀}.
    pub semigroup_constant: Option<f64>,
    /// C_X · A.
    pub c_x_a: Option<f64>,
    /// 1/(4 C_X ‖u₁‖_X); above 1 the contraction argument applies.
    pub threshold_margin: f64,
    pub converged: bool,
    pub non_contraction: bool,
    /// ‖u − u₁ + B(u, u)‖_X of the returned solution, when evaluated.
    pub residual: Option<f64>,
}

impl ContractionReport {
    fn from_diffs(diffs: Vec<f64>, linear_norm: f64, converged: bool, non_contraction: bool) -> Self {
        let step_ratios: Vec<f64> = diffs.windows(2).map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 }).collect();
        let top = diffs.iter().fold(0.0, |m: f64, v| m.max(*v));
        let pts: Vec<(f64, f64)> = diffs
            .iter()
            .enumerate()
            .filter(|(_, d)| **d > 1e-13 * top && **d > 0.0)
            .map(|(i, d)| (i as f64, d.ln()))
            .collect();
        let ratio = if pts.len() >= 2 {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            fit_slope(&x, &y).map(f64::exp).unwrap_or(f64::NAN)
        } else {
            0.0
        };
        let bilinear_constant =
            if linear_norm > 0.0 { diffs.first().copied().unwrap_or(0.0) / (linear_norm * linear_norm) } else { 0.0 };
        let threshold_margin =
            if bilinear_constant > 0.0 { 1.0 / (4.0 * bilinear_constant * linear_norm) } else { f64::INFINITY };
        Self {
            diffs,
            step_ratios,
            ratio,
            linear_norm,
            bilinear_constant,
            data_norm: None,
            semigroup_constant: None,
            c_x_a: None,
            threshold_margin,
            converged,
            non_contraction,
            residual: None,
        }
    }

    fn with_data_norm(mut self, x0: f64) -> Self {
        self.data_norm = Some(x0);
        if x0 > 0.0 {
            let a = self.linear_norm / x0;
            self.semigroup_constant = Some(a);
            self.c_x_a = Some(self.bilinear_constant * a);
        }
        self
    }

    /// Largest step ratio before the differences reach the roundoff floor.
    pub fn max_step_ratio(&self) -> f64 {
        let top = self.diffs.iter().fold(0.0, |m: f64, v| m.max(*v));
        self.diffs
            .windows(2)
            .filter(|w| w[1] > 1e-12 * top)
            .map(|w| w[1] / w[0])
            .fold(0.0, f64::max)
    }
}

fn grows_three_times(diffs: &[f64]) -> bool {
    diffs.len() >= 4 && diffs[diffs.len() - 4..].windows(2).all(|w| w[1] > w[0])
}

fn require_divfree(u0: &BoxField) -> Result<()> {
    if u0.components() != 3 {
        return Err(Error::Precondition("datum must be a 3-component velocity field".into()));
    }
    let rd = relative_divergence(u0)?;
    if rd > 1e-10 {
        return Err(Error::Precondition(format!("datum not divergence-free (relative divergence {rd:.3e})")));
    }
    Ok(())
}

/// u₁ = e^{tΔ}u₀, u_{n+1} = u₁ − B(u_n, u_n); returns u₁ … u_N with N = n_iters.
/// Stops early, with the flag set, once d_n has grown three times in a row.
pub fn picard_iterate(u0: &BoxField, grid: &TimeGrid, n_iters: usize, q: f64, r: f64) -> Result<(Vec<Trajectory>, ContractionReport)> {
    if n_iters == 0 {
        return Err(Error::Domain("picard_iterate needs n_iters >= 1".into()));
    }
    require_divfree(u0)?;
    check_scaling(q, r)?;
    let heat = HeatTrajectory::new(u0, grid.clone())?;
    let u1 = heat.materialize()?;
    let linear_norm = x_norm(&u1, q, r)?;
    let mut iterates = vec![u1];
    let mut diffs = Vec::new();
    let mut non_contraction = false;
    while iterates.len() < n_iters {
        let last = iterates.last().expect("nonempty");
        let b = duhamel_bilinear(last, last)?;
        let snaps = iterates[0].snapshots.iter().zip(b.snapshots).map(|(a, b)| a.sub(&b)).collect::<Result<Vec<_>>>()?;
        let next = Trajectory { times: grid.clone(), snapshots: snaps };
        diffs.push(x_norm_of_difference(&next, last, q, r)?);
        iterates.push(next);
        if grows_three_times(&diffs) {
            non_contraction = true;
            break;
        }
    }
    let report = ContractionReport::from_diffs(diffs, linear_norm, false, non_contraction);
    Ok((iterates, report))
}

/// Solver settings; defaults are (q, r) = (4, 8) with data measured in L²_{|x|}L⁴_θ with weight |x|^{−1/2}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub q: f64,
    pub r: f64,
    pub tol: f64,
    pub max_iters: usize,
    /// Adapted data norm ‖|x|^α u₀‖_{L^p L^{p̃}}; None skips it.
    pub data_spec: Option<MixedNormSpec>,
    /// Evaluate the mild-equation residual of the returned solution.
    pub check_residual: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            q: 4.0,
            r: 8.0,
            tol: 1e-10,
            max_iters: 40,
            data_spec: Some(MixedNormSpec { p: 2.0, p_tilde: 4.0, beta: -0.5 }),
            check_residual: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub trajectory: Trajectory,
    pub ledger: PathLedger,
    pub report: ContractionReport,
    /// ‖u‖_{L^r_t L^q_x} / ‖|x|^α u₀‖_{X₀}.
    pub empirical_c_bar: Option<f64>,
}

/// Outcome of the streamed iteration without the ledger.
struct Iterated {
    u: Trajectory,
    report: ContractionReport,
}

fn iterate_to_tolerance(u0: &BoxField, grid: &TimeGrid, cfg: &SolverConfig) -> Result<Iterated> {
    require_divfree(u0)?;
    check_scaling(cfg.q, cfg.r)?;
    let heat = HeatTrajectory::new(u0, grid.clone())?;
    let u1 = heat.materialize()?;
    let linear_norm = x_norm(&u1, cfg.q, cfg.r)?;
    let mut current = u1.clone();
    let mut diffs = Vec::new();
    let mut converged = linear_norm == 0.0;
    let mut non_contraction = false;
    let mut iters = 1;
    while !converged && iters < cfg.max_iters {
        let b = duhamel_bilinear(&current, &current)?;
        let snaps = u1.snapshots.iter().zip(b.snapshots).map(|(a, b)| a.sub(&b)).collect::<Result<Vec<_>>>()?;
        let next = Trajectory { times: grid.clone(), snapshots: snaps };
        let d = x_norm_of_difference(&next, &current, cfg.q, cfg.r)?;
        diffs.push(d);
        current = next;
        iters += 1;
        if !d.is_finite() || grows_three_times(&diffs) {
            non_contraction = true;
            break;
        }
        converged = d < cfg.tol;
    }
    let mut report = ContractionReport::from_diffs(diffs, linear_norm, converged, non_contraction);
    if cfg.check_residual && converged {
        let b = duhamel_bilinear(&current, &current)?;
        let t = grid.nodes();
        let resid = (0..t.len()).map(|i| current.snapshots[i].sub(&u1.snapshots[i])?.add(&b.snapshots[i]));
        report.residual = Some(NodeNorms::of_field(t, resid, cfg.q)?.x_norm(cfg.r));
    }
    Ok(Iterated { u: current, report })
}

/// Iterate until ‖u_{n+1} − u_n‖_X < tol; non-contraction is an error carrying the report.
pub fn solve_small_data(u0: &BoxField, grid: &TimeGrid, cfg: &SolverConfig) -> Result<Solution> {
    let it = iterate_to_tolerance(u0, grid, cfg)?;
    let mut report = it.report;
    if !report.converged {
        let last_ratio = report.step_ratios.last().copied().unwrap_or(f64::NAN);
        return Err(Error::NonContraction { iterations: report.diffs.len() + 1, last_ratio, report: Box::new(report) });
    }
    let ledger = PathLedger::build(&it.u, cfg.q, cfg.r)?;
    let mut c_bar = None;
    if let Some(spec) = cfg.data_spec {
        let sg = SphereSpec::for_box(u0.grid()).build()?;
        let x0 = mixed_norm(u0, &sg, spec)?;
        report = report.with_data_norm(x0);
        if x0 > 0.0 {
            c_bar = Some(ledger.lr_lq_accumulated.last().copied().unwrap_or(0.0) / x0);
        }
    }
    Ok(Solution { trajectory: it.u, ledger, report, empirical_c_bar: c_bar })
}

/// Bisection of the largest data scale c at which iterating from c·shape converges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    /// Largest scale observed to converge.
    pub threshold: f64,
    /// Smallest scale observed to fail.
    pub failing: f64,
    pub evaluations: usize,
}

/// Double the scale until the iteration fails within `cfg.max_iters`, then bisect to relative width `rel_tol`.
pub fn measure_threshold(shape: &BoxField, grid: &TimeGrid, cfg: &SolverConfig, start: f64, rel_tol: f64) -> Result<ThresholdReport> {
    let probe_cfg = SolverConfig { data_spec: None, check_residual: false, ..cfg.clone() };
    let mut evaluations = 0;
    let mut converges = |c: f64| -> Result<bool> {
        evaluations += 1;
        Ok(iterate_to_tolerance(&shape.scale(c), grid, &probe_cfg)?.report.converged)
    };
    let (mut lo, mut hi) = (0.0, start);
    let mut tries = 0;
    while converges(hi)? {
        lo = hi;
        hi *= 2.0;
        tries += 1;
        if tries > 40 {
            return Err(Error::Fit("iteration converged at every tested scale; no threshold found".into()));
        }
    }
    if lo == 0.0 {
        let mut c = hi;
        loop {
            c /= 2.0;
            tries += 1;
            if tries > 80 {
                return Err(Error::Fit("iteration failed at every tested scale".into()));
            }
            if converges(c)? {
                lo = c;
                hi = 2.0 * c;
                break;
            }
        }
    }
    while (hi - lo) > rel_tol * lo {
        let mid = 0.5 * (lo + hi);
        if converges(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ThresholdReport { threshold: lo, failing: hi, evaluations })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    times: Vec<f64>,
    n: usize,
    half_width: f64,
    files: Vec<String>,
    /// Written for inspection only; non-finite entries serialize as null.
    #[serde(skip_serializing_if = "Option::is_none", skip_deserializing)]
    ledger: Option<PathLedger>,
    #[serde(skip_serializing_if = "Option::is_none", skip_deserializing)]
    report: Option<ContractionReport>,
}

/// Write one NSF1 file per node plus manifest.json.
pub fn write_trajectory_dir(dir: &Path, traj: &Trajectory, ledger: Option<&PathLedger>, report: Option<&ContractionReport>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(traj.snapshots.len());
    for (i, s) in traj.snapshots.iter().enumerate() {
        let name = format!("node_{i:04}.nsf");
        write_field(&dir.join(&name), s)?;
        files.push(name);
    }
    let g = traj.box_grid();
    let manifest = Manifest {
        times: traj.times.nodes().to_vec(),
        n: g.n(),
        half_width: g.half_width(),
        files,
        ledger: ledger.cloned(),
        report: report.cloned(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn read_trajectory_dir(dir: &Path) -> Result<Trajectory> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let times = TimeGrid::from_nodes(manifest.times)?;
    let snaps = manifest.files.iter().map(|f| read_field(&dir.join(f))).collect::<Result<Vec<_>>>()?;
    Trajectory::new(times, snaps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{curl_lift, gen_gaussian};

    fn datum(g: BoxGrid, scale: f64) -> BoxField {
        curl_lift(&gen_gaussian(g, 1.0, [0.0; 3]).unwrap()).unwrap().scale(scale)
    }

    fn small() -> (BoxGrid, TimeGrid) {
        (BoxGrid::new(16, 6.0).unwrap(), TimeGrid::uniform(0.5, 8).unwrap())
    }

    #[test]
    fn time_grid_validation() {
        assert!(TimeGrid::from_nodes(vec![0.0, 0.5, 0.5]).is_err());
        assert!(TimeGrid::from_nodes(vec![0.1, 0.5]).is_err());
        let g = TimeGrid::graded(1.0, 4, 2.0).unwrap();
        assert_eq!(g.nodes(), &[0.0, 1.0 / 16.0, 0.25, 9.0 / 16.0, 1.0]);
    }

    #[test]
    fn admissible_tables() {
        let a = admissible_exponents(2.0).unwrap();
        assert_eq!((a.q_min, a.q_max), (4.0, None));
        assert!(a.contains(4.0) && a.contains(1e6));
        assert_eq!(AdmissibleExponents::r_of(4.0), 8.0);
        let b = admissible_exponents(3.0).unwrap();
        assert_eq!((b.q_min, b.q_max, b.q_min_inclusive), (3.0, Some(9.0), true));
        assert!(b.contains(3.0) && !b.contains(9.0));
        assert!(AdmissibleExponents::r_of(3.0).is_infinite());
        assert!(!b.notes.is_empty());
        let c = admissible_exponents(4.0).unwrap();
        assert!(!c.contains(4.0) && c.contains(5.0) && !c.contains(6.0));
        assert!(admissible_exponents(5.0).is_err());
        assert!(admissible_exponents(1.0).is_err());
    }

    #[test]
    fn bilinear_zero_linear_and_solenoidal() {
        let (g, t) = small();
        let u = HeatTrajectory::new(&datum(g, 1.0), t.clone()).unwrap().materialize().unwrap();
        let v = HeatTrajectory::new(&datum(g, 0.5), t.clone()).unwrap().materialize().unwrap().scale(-1.3);
        let zero = Trajectory::zeros(t.clone(), g).unwrap();
        let b0 = duhamel_bilinear(&zero, &v).unwrap();
        assert!(b0.snapshots().iter().all(|s| s.max_abs().unwrap() == 0.0));
        let b = duhamel_bilinear(&u, &v).unwrap();
        let b2 = duhamel_bilinear(&u.scale(2.0), &v).unwrap();
        for (x, y) in b.snapshots().iter().zip(b2.snapshots()) {
            let scale = y.max_abs().unwrap().max(1e-300);
            assert!(y.sub(&x.scale(2.0)).unwrap().max_abs().unwrap() <= 1e-12 * scale);
        }
        assert!(b.max_relative_divergence().unwrap() < 1e-10);
    }

    #[test]
    fn bilinear_constant_forcing_matches_exact_integral() {
        // a steady u⊗v gives B(t) = (1 − e^{−|k|²t})/|k|² · ℙ∇·(u⊗v), exact for any step
        let g = BoxGrid::new(16, 6.0).unwrap();
        let u0 = datum(g, 1.0);
        let t = TimeGrid::from_nodes(vec![0.0, 0.1, 0.35, 0.4]).unwrap();
        let steady = Trajectory::new(t.clone(), vec![u0.clone(); 4]).unwrap();
        let b = duhamel_bilinear(&steady, &steady).unwrap();
        let (n, _) = leray_divergence_products(&u0, &u0, false).unwrap();
        let nv = n.spectral_values().unwrap();
        for (i, &ti) in t.nodes().iter().enumerate() {
            let len = g.len();
            let exact: Vec<Complex64> = nv
                .iter()
                .enumerate()
                .map(|(j, z)| {
                    let k2 = g.k_squared(j % len);
                    if k2 == 0.0 {
                        z * ti
                    } else {
                        z * (-(-k2 * ti).exp_m1() / k2)
                    }
                })
                .collect();
            let e = BoxField::from_spectral(g, 3, exact).unwrap().to_physical().unwrap();
            let d = b.snapshots()[i].sub(&e).unwrap().max_abs().unwrap();
            assert!(d <= 1e-12 * e.max_abs().unwrap().max(1e-300), "node {i}: {d}");
        }
    }

    #[test]
    fn picard_zero_and_quadratic_scaling() {
        let (g, t) = small();
        let (it, rep) = picard_iterate(&BoxField::zeros(g, 3).unwrap(), &t, 3, 4.0, 8.0).unwrap();
        assert!(it.iter().all(|u| u.snapshots().iter().all(|s| s.max_abs().unwrap() == 0.0)));
        assert!(rep.diffs.iter().all(|d| *d == 0.0));
        let c = 0.37;
        let (a, _) = picard_iterate(&datum(g, 0.1), &t, 2, 4.0, 8.0).unwrap();
        let (b, _) = picard_iterate(&datum(g, 0.1 * c), &t, 2, 4.0, 8.0).unwrap();
        for i in 0..t.len() {
            let ca = a[1].snapshots()[i].sub(&a[0].snapshots()[i]).unwrap();
            let cb = b[1].snapshots()[i].sub(&b[0].snapshots()[i]).unwrap();
            let scale = ca.max_abs().unwrap();
            if scale > 0.0 {
                assert!(cb.sub(&ca.scale(c * c)).unwrap().max_abs().unwrap() <= 1e-10 * scale * c * c);
            }
        }
    }

    #[test]
    fn picard_defining_identity_and_contraction() {
        let (g, t) = small();
        let u0 = datum(g, 0.2);
        let (it, rep) = picard_iterate(&u0, &t, 6, 4.0, 8.0).unwrap();
        let last = it.len() - 1;
        let b = duhamel_bilinear(&it[last - 1], &it[last - 1]).unwrap();
        for i in 0..t.len() {
            let r = it[last].snapshots()[i].sub(&it[0].snapshots()[i]).unwrap().add(&b.snapshots()[i]).unwrap();
            assert!(r.max_abs().unwrap() <= 1e-12 * it[0].snapshots()[i].max_abs().unwrap().max(1e-300));
        }
        assert!(!rep.non_contraction);
        assert!(rep.ratio < 1.0, "{rep:?}");
    }

    #[test]
    fn divergent_datum_rejected() {
        let (g, t) = small();
        let bad = BoxField::from_fn(g, 3, |x, o| {
            o[0] = (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp();
        })
        .unwrap();
        let err = solve_small_data(&bad, &t, &SolverConfig::default()).unwrap_err();
        assert!(err.to_string().contains("datum not divergence-free"));
    }

    #[test]
    fn small_data_solve_residual_and_ledger() {
        let (g, t) = small();
        let cfg = SolverConfig { data_spec: None, ..SolverConfig::default() };
        let sol = solve_small_data(&datum(g, 0.2), &t, &cfg).unwrap();
        assert!(sol.report.converged);
        assert!(sol.report.residual.unwrap() <= 10.0 * cfg.tol);
        assert!(sol.trajectory.max_relative_divergence().unwrap() < 1e-10);
        let l = &sol.ledger;
        assert!(l.dissipation.windows(2).all(|w| w[1] >= w[0]));
        assert!(l.energy.iter().all(|e| *e >= 0.0));
        assert!(PathLedger::build(&sol.trajectory, 4.0, 6.0).is_err());
    }

    #[test]
    fn large_data_flags_non_contraction() {
        let (g, t) = small();
        let cfg = SolverConfig { data_spec: None, max_iters: 30, ..SolverConfig::default() };
        match solve_small_data(&datum(g, 2000.0), &t, &cfg) {
            Err(Error::NonContraction { report, .. }) => assert!(!report.converged),
            other => panic!("expected non-contraction, got {other:?}"),
        }
    }

    #[test]
    fn heat_energy_identity_improves_with_steps() {
        let g = BoxGrid::new(16, 6.0).unwrap();
        let u0 = datum(g, 1.0);
        let worst = |steps| {
            let h = HeatTrajectory::new(&u0, TimeGrid::uniform(1.0, steps).unwrap()).unwrap();
            energy_check(&h).unwrap().into_iter().fold(0.0, f64::max)
        };
        let (a, b) = (worst(16), worst(32));
        assert!(a < 0.01 && b < a, "{a} {b}");
        let z = HeatTrajectory::new(&BoxField::zeros(g, 3).unwrap(), TimeGrid::uniform(1.0, 4).unwrap()).unwrap();
        assert!(energy_check(&z).unwrap().iter().all(|d| *d == 0.0));
    }

    #[test]
    fn trajectory_directory_round_trip() {
        let (g, t) = small();
        let traj = HeatTrajectory::new(&datum(g, 1.0), t).unwrap().materialize().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let ledger = PathLedger::build(&traj, 4.0, 8.0).unwrap();
        write_trajectory_dir(dir.path(), &traj, Some(&ledger), None).unwrap();
        assert!(dir.path().join("node_0008.nsf").exists());
        assert_eq!(read_trajectory_dir(dir.path()).unwrap(), traj);
    }

    #[test]
    fn zero_solution_directory_reads_back() {
        let (g, t) = small();
        let sol = solve_small_data(&BoxField::zeros(g, 3).unwrap(), &t, &SolverConfig { data_spec: None, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_trajectory_dir(dir.path(), &sol.trajectory, Some(&sol.ledger), Some(&sol.report)).unwrap();
        assert_eq!(read_trajectory_dir(dir.path()).unwrap(), sol.trajectory);
    }
}
