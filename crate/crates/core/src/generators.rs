//! Test-data generators: Gaussians, mollifier bumps, seeded band-limited
//! random fields, and the fixed standard family shared by the verifiers.
//!
//! Random fields are built from lattice modes (π/L)·m with |m| below a
//! cutoff fixed by the spectrum and L, drawn in a fixed mode order, so the
//! same seed gives the same continuous function on every resolution.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BoxField, BoxGrid, Representation};
use crate::spectral::{gradient, leray_project};

/// Displacement x − x0 wrapped to the nearest periodic image.
pub(crate) fn min_image(g: &BoxGrid, x: [f64; 3], x0: [f64; 3]) -> [f64; 3] {
    let w = 2.0 * g.half_width();
    let mut d = [0.0; 3];
    for a in 0..3 {
        let v = x[a] - x0[a];
        d[a] = v - w * (v / w).round();
    }
    d
}

/// Heat kernel G_s(x − x0) = (4πs)^{−3/2} e^{−|x−x0|²/4s}.
pub fn gen_gaussian(g: BoxGrid, s: f64, x0: [f64; 3]) -> Result<BoxField> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!("Gaussian width s must be > 0, got {s}")));
    }
    let c = (4.0 * PI * s).powf(-1.5);
    BoxField::from_fn(g, 1, |x, o| {
        let d = min_image(&g, x, x0);
        o[0] = c * (-(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) / (4.0 * s)).exp();
    })
}

/// Warning text when the Gaussian tail is cut by the box (4√s > L − |x0|∞).
pub fn gaussian_truncation_warning(g: &BoxGrid, s: f64, x0: [f64; 3]) -> Option<String> {
    let room = g.half_width() - x0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (4.0 * s.sqrt() > room).then(|| {
        format!("Gaussian with s = {s} is truncated by the box: 4*sqrt(s) = {:.4} > {:.4}", 4.0 * s.sqrt(), room)
    })
}

/// Mollifier φ(x) = exp(1/(|x|² − 1)) on the unit ball.
pub fn bump_profile(r2: f64) -> f64 {
    if r2 < 1.0 {
        (1.0 / (r2 - 1.0)).exp()
    } else {
        0.0
    }
}

/// φ((x − c)/R).
pub fn gen_bump(g: BoxGrid, radius: f64, center: [f64; 3]) -> Result<BoxField> {
    if !(radius > 0.0) {
        return Err(Error::Domain(format!("bump radius must be > 0, got {radius}")));
    }
    let reach = radius + center.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if reach > g.half_width() - g.spacing() {
        return Err(Error::Domain(format!(
            "bump of radius {radius} at {center:?} leaves the box interior (needs {reach} <= {})",
            g.half_width() - g.spacing()
        )));
    }
    BoxField::from_fn(g, 1, |x, o| {
        let d = [(x[0] - center[0]) / radius, (x[1] - center[1]) / radius, (x[2] - center[2]) / radius];
        o[0] = bump_profile(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
    })
}

/// φ_K(x) = φ(x − Kξ) with ξ normalized to a unit vector.
pub fn gen_translated_bump(g: BoxGrid, k: f64, xi: [f64; 3]) -> Result<BoxField> {
    let norm = (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt();
    if !(norm > 0.0) || !(k >= 0.0) {
        return Err(Error::Domain("translated bump needs K >= 0 and a nonzero direction".into()));
    }
    if k + 1.0 > g.half_width() - g.spacing() {
        return Err(Error::Domain(format!(
            "support of the bump translated by K = {k} leaves the box (K + 1 > L - h = {})",
            g.half_width() - g.spacing()
        )));
    }
    let c = [k * xi[0] / norm, k * xi[1] / norm, k * xi[2] / norm];
    BoxField::from_fn(g, 1, |x, o| {
        let d = [x[0] - c[0], x[1] - c[1], x[2] - c[2]];
        o[0] = bump_profile(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
    })
}

/// Per-|k| amplitude of a random field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Spectrum {
    /// amplitude · exp(−|k|²/(2k0²))
    Gaussian { k0: f64, amplitude: f64 },
}

impl Spectrum {
    fn amplitude(&self, k2: f64) -> f64 {
        match *self {
            Spectrum::Gaussian { k0, amplitude } => amplitude * (-k2 / (2.0 * k0 * k0)).exp(),
        }
    }

    /// Largest lattice index along an axis where the spectrum exceeds e^{−18} of its peak.
    fn cutoff(&self, half_width: f64) -> i64 {
        match *self {
            Spectrum::Gaussian { k0, .. } => (6.0 * k0 * half_width / PI).ceil() as i64,
        }
    }

    fn scale(&self) -> f64 {
        match *self {
            Spectrum::Gaussian { k0, .. } => k0,
        }
    }
}

/// Seeded Hermitian random spectrum with `comps` components on lattice modes |m|∞ ≤ cutoff.
fn random_spectrum(g: &BoxGrid, comps: usize, seed: u64, spectrum: Spectrum) -> Result<BoxField> {
    let n = g.n() as i64;
    let cut = spectrum.cutoff(g.half_width());
    if cut >= n / 2 {
        return Err(Error::Resolution(format!(
            "spectrum needs lattice modes up to {cut}, grid resolves only {}",
            n / 2 - 1
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dk = PI / g.half_width();
    // normalization keeps the pointwise variance independent of L
    let norm = (dk / spectrum.scale()).powf(1.5);
    let len = g.len();
    let mut c = vec![Complex64::new(0.0, 0.0); comps * len];
    let wrap = |m: i64| ((m + n) % n) as usize;
    for mx in -cut..=cut {
        for my in -cut..=cut {
            for mz in -cut..=cut {
                // draw once per ± pair, in a fixed half-space order
                let key = (mx, my, mz);
                if key < (0, 0, 0) {
                    continue;
                }
                let k2 = dk * dk * (mx * mx + my * my + mz * mz) as f64;
                let amp = norm * spectrum.amplitude(k2);
                let idx = g.index(wrap(mx), wrap(my), wrap(mz));
                let neg = g.index(wrap(-mx), wrap(-my), wrap(-mz));
                for comp in 0..comps {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    let z = if key == (0, 0, 0) {
                        Complex64::new(re, 0.0)
                    } else {
                        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
                    };
                    c[comp * len + idx] = z * amp;
                    c[comp * len + neg] = (z * amp).conj();
                }
            }
        }
    }
    BoxField::from_spectral(*g, comps, c)
}

/// Seeded divergence-free band-limited vector field, returned physical.
pub fn gen_divfree_random(g: BoxGrid, seed: u64, spectrum: Spectrum) -> Result<BoxField> {
    leray_project(&random_spectrum(&g, 3, seed, spectrum)?)?.into_representation(Representation::Physical)
}

/// Seeded band-limited scalar field multiplied by the window exp(−|x|²/2R²).
pub fn gen_windowed_random(g: BoxGrid, seed: u64, spectrum: Spectrum, window: f64) -> Result<BoxField> {
    let f = random_spectrum(&g, 1, seed, spectrum)?.to_physical()?;
    let v = f.physical_values()?;
    let out = (0..g.len())
        .map(|i| {
            let x = g.point(i);
            v[i] * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / (2.0 * window * window)).exp()
        })
        .collect();
    BoxField::from_physical(g, 1, out)
}

/// curl(0, 0, f) = (∂_y f, −∂_x f, 0), a divergence-free lift of a scalar.
pub fn curl_lift(f: &BoxField) -> Result<BoxField> {
    if f.components() != 1 {
        return Err(Error::Domain("curl_lift expects a scalar field".into()));
    }
    let repr = f.representation();
    let grad = gradient(f)?.into_representation(Representation::Spectral)?;
    let c = grad.spectral_values()?;
    let len = f.grid().len();
    let mut out = vec![Complex64::new(0.0, 0.0); 3 * len];
    out[..len].copy_from_slice(&c[len..2 * len]);
    for (o, z) in out[len..2 * len].iter_mut().zip(&c[..len]) {
        *o = -z;
    }
    BoxField::from_spectral(*f.grid(), 3, out)?.into_representation(repr)
}

/// One member of the standard family, built on demand for a given grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MemberKind {
    Gaussian { s: f64, center: [f64; 3] },
    Bump { radius: f64 },
    Random { seed: u64, k0: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyMember {
    pub name: String,
    pub kind: MemberKind,
}

pub const OFFSET_CENTER: [f64; 3] = [1.5, -1.0, 0.5];

impl FamilyMember {
    /// Scalar field of this member.
    pub fn build(&self, g: BoxGrid) -> Result<BoxField> {
        match &self.kind {
            MemberKind::Gaussian { s, center } => gen_gaussian(g, *s, *center),
            MemberKind::Bump { radius } => gen_bump(g, *radius, [0.0; 3]),
            MemberKind::Random { seed, k0 } => gen_windowed_random(
                g,
                *seed,
                Spectrum::Gaussian { k0: *k0, amplitude: 1.0 },
                g.half_width() / 5.0,
            ),
        }
    }

    /// Divergence-free vector field curl(0, 0, f) of this member.
    pub fn build_vector(&self, g: BoxGrid) -> Result<BoxField> {
        curl_lift(&self.build(g)?)
    }
}

/// The 12 fixed members: Gaussians s ∈ {1/2, 1, 2} centered and offset,
/// bumps of radius {2, 3, 4}, and three seeded windowed random fields.
pub fn standard_family() -> Vec<FamilyMember> {
    let mut out = Vec::with_capacity(12);
    for s in [0.5, 1.0, 2.0] {
        out.push(FamilyMember { name: format!("gaussian_s{s}"), kind: MemberKind::Gaussian { s, center: [0.0; 3] } });
        out.push(FamilyMember {
            name: format!("gaussian_s{s}_offset"),
            kind: MemberKind::Gaussian { s, center: OFFSET_CENTER },
        });
    }
    for radius in [2.0, 3.0, 4.0] {
        out.push(FamilyMember { name: format!("bump_r{radius}"), kind: MemberKind::Bump { radius } });
    }
    for seed in 1..=3u64 {
        out.push(FamilyMember { name: format!("random_seed{seed}"), kind: MemberKind::Random { seed, k0: 0.8 } });
    }
    out
}
