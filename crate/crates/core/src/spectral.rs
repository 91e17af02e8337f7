//! Fourier-multiplier operators on periodic box fields.
//!
//! Every operator accepts either representation and returns its result in
//! the representation of the input. Odd symbols (derivatives, Riesz, Leray's
//! correction, Δ⁻¹) use the derivative wavenumber, which is zero at the
//! Nyquist index; the heat symbol uses the full |k|².

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BoxField, BoxGrid, Representation};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MultiplierOp {
    Leray,
    Riesz { j: usize },
    Heat { t: f64 },
    Oseen { t: f64 },
    Gradient,
    Divergence,
    InvLaplace,
}

impl MultiplierOp {
    pub fn apply(&self, f: &BoxField) -> Result<BoxField> {
        match *self {
            MultiplierOp::Leray => leray_project(f),
            MultiplierOp::Riesz { j } => riesz(f, j),
            MultiplierOp::Heat { t } => heat_flow(f, t),
            MultiplierOp::Oseen { t } => oseen_step(f, t),
            MultiplierOp::Gradient => gradient(f),
            MultiplierOp::Divergence => divergence(f),
            MultiplierOp::InvLaplace => inv_laplace(f),
        }
    }
}

fn require(f: &BoxField, comps: &[usize], what: &str) -> Result<()> {
    if comps.contains(&f.components()) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} expects {comps:?} components, got {}", f.components())))
    }
}

/// Run `op` on the spectral coefficients and hand the result back in the input's representation.
fn with_spectrum(
    f: &BoxField,
    out_comps: usize,
    op: impl Fn(&BoxGrid, &[Complex64], &mut [Complex64]) + Sync,
) -> Result<BoxField> {
    let repr = f.representation();
    let spec = f.as_spectral()?;
    let g = *f.grid();
    let mut out = vec![ZERO; out_comps * g.len()];
    op(&g, spec.spectral_values()?, &mut out);
    BoxField::from_spectral(g, out_comps, out)?.into_representation(repr)
}

/// Apply a per-mode linear map from `cin` input components to `cout` outputs.
fn per_mode<const CIN: usize, const COUT: usize>(
    g: &BoxGrid,
    input: &[Complex64],
    out: &mut [Complex64],
    map: impl Fn(usize, &[Complex64; CIN]) -> [Complex64; COUT] + Sync,
) {
    let len = g.len();
    let results: Vec<[Complex64; COUT]> = (0..len)
        .into_par_iter()
        .map(|idx| {
            let mut v = [ZERO; CIN];
            for (c, slot) in v.iter_mut().enumerate() {
                *slot = input[c * len + idx];
            }
            map(idx, &v)
        })
        .collect();
    for (idx, r) in results.iter().enumerate() {
        for (c, z) in r.iter().enumerate() {
            out[c * len + idx] = *z;
        }
    }
}

fn dot(k: &[f64; 3], v: &[Complex64]) -> Complex64 {
    v[0] * k[0] + v[1] * k[1] + v[2] * k[2]
}

fn leray_mode(k: [f64; 3], v: &[Complex64; 3]) -> [Complex64; 3] {
    let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
    if k2 == 0.0 {
        return *v;
    }
    let kv = dot(&k, v) / k2;
    [v[0] - kv * k[0], v[1] - kv * k[1], v[2] - kv * k[2]]
}

/// Leray projection: multiplier δ_jk − k_j k_k/|k|².
pub fn leray_project(v: &BoxField) -> Result<BoxField> {
    require(v, &[3], "leray_project")?;
    with_spectrum(v, 3, |g, inp, out| per_mode::<3, 3>(g, inp, out, |idx, m| leray_mode(g.k_vector(idx), m)))
}

/// Riesz transform R_j: multiplier i k_j/|k|, zero mode sent to 0.
pub fn riesz(f: &BoxField, j: usize) -> Result<BoxField> {
    require(f, &[1], "riesz")?;
    if j > 2 {
        return Err(Error::Domain(format!("Riesz direction must be 0, 1 or 2, got {j}")));
    }
    with_spectrum(f, 1, |g, inp, out| {
        per_mode::<1, 1>(g, inp, out, |idx, m| {
            let k = g.k_vector(idx);
            let kn = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
            if kn == 0.0 {
                [ZERO]
            } else {
                [I * (k[j] / kn) * m[0]]
            }
        })
    })
}

/// Composite R_j R_l: multiplier −k_j k_l/|k|².
pub fn riesz_pair(f: &BoxField, j: usize, l: usize) -> Result<BoxField> {
    require(f, &[1], "riesz_pair")?;
    if j > 2 || l > 2 {
        return Err(Error::Domain("Riesz directions must be 0, 1 or 2".into()));
    }
    with_spectrum(f, 1, |g, inp, out| {
        per_mode::<1, 1>(g, inp, out, |idx, m| {
            let k = g.k_vector(idx);
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            if k2 == 0.0 {
                [ZERO]
            } else {
                [m[0] * (-k[j] * k[l] / k2)]
            }
        })
    })
}

/// Heat semigroup e^{tΔ}: multiplier e^{−|k|²t}.
pub fn heat_flow(f: &BoxField, t: f64) -> Result<BoxField> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("heat flow time must be >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(f.clone());
    }
    let comps = f.components();
    with_spectrum(f, comps, |g, inp, out| {
        let len = g.len();
        out.par_iter_mut().zip(inp.par_iter()).enumerate().for_each(|(i, (o, z))| {
            *o = z * (-g.k_squared(i % len) * t).exp();
        });
    })
}

/// Oseen step e^{tΔ}ℙ∇·F for a tensor F (slot 3j + l holds F_jl, divergence over j).
pub fn oseen_step(f: &BoxField, t: f64) -> Result<BoxField> {
    require(f, &[9], "oseen_step")?;
    if !(t > 0.0) {
        return Err(Error::Domain(format!("Oseen step needs t > 0, got {t}")));
    }
    with_spectrum(f, 3, |g, inp, out| {
        per_mode::<9, 3>(g, inp, out, |idx, m| {
            let k = g.k_vector(idx);
            let d = tensor_divergence_mode(&k, m);
            let p = leray_mode(k, &d);
            let decay = (-g.k_squared(idx) * t).exp();
            [p[0] * decay, p[1] * decay, p[2] * decay]
        })
    })
}

#[inline]
pub(crate) fn tensor_divergence_mode(k: &[f64; 3], m: &[Complex64; 9]) -> [Complex64; 3] {
    let mut d = [ZERO; 3];
    for (l, dl) in d.iter_mut().enumerate() {
        *dl = I * (k[0] * m[l] + k[1] * m[3 + l] + k[2] * m[6 + l]);
    }
    d
}

/// Gradient of a scalar (3 outputs) or of a vector (9 outputs, slot 3j + l = ∂_j u_l).
pub fn gradient(f: &BoxField) -> Result<BoxField> {
    require(f, &[1, 3], "gradient")?;
    let comps = f.components();
    with_spectrum(f, 3 * comps, |g, inp, out| {
        let len = g.len();
        for l in 0..comps {
            for j in 0..3 {
                let src = &inp[l * len..(l + 1) * len];
                let dst_slot = if comps == 1 { j } else { 3 * j + l };
                out[dst_slot * len..(dst_slot + 1) * len]
                    .par_iter_mut()
                    .enumerate()
                    .for_each(|(idx, o)| *o = I * g.k_vector(idx)[j] * src[idx]);
            }
        }
    })
}

/// Componentwise ∂^η with η = (η₁, η₂, η₃).
pub fn partial_derivative(f: &BoxField, eta: [u32; 3]) -> Result<BoxField> {
    if eta == [0; 3] {
        return Ok(f.clone());
    }
    let comps = f.components();
    with_spectrum(f, comps, |g, inp, out| {
        let len = g.len();
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let k = g.k_vector(i % len);
            let mut m = Complex64::new(1.0, 0.0);
            for a in 0..3 {
                for _ in 0..eta[a] {
                    m *= I * k[a];
                }
            }
            *o = m * inp[i];
        });
    })
}

/// Divergence of a vector (scalar output) or of a tensor over its first index (vector output).
pub fn divergence(f: &BoxField) -> Result<BoxField> {
    require(f, &[3, 9], "divergence")?;
    if f.components() == 3 {
        with_spectrum(f, 1, |g, inp, out| {
            per_mode::<3, 1>(g, inp, out, |idx, m| [I * dot(&g.k_vector(idx), m)])
        })
    } else {
        with_spectrum(f, 3, |g, inp, out| {
            per_mode::<9, 3>(g, inp, out, |idx, m| tensor_divergence_mode(&g.k_vector(idx), m))
        })
    }
}

fn kd_squared(g: &BoxGrid, idx: usize) -> f64 {
    let k = g.k_vector(idx);
    k[0] * k[0] + k[1] * k[1] + k[2] * k[2]
}

/// Δ⁻¹ with the mean mode sent to 0.
pub fn inv_laplace(f: &BoxField) -> Result<BoxField> {
    let comps = f.components();
    with_spectrum(f, comps, |g, inp, out| {
        let len = g.len();
        out.par_iter_mut().zip(inp.par_iter()).enumerate().for_each(|(i, (o, z))| {
            let k2 = kd_squared(g, i % len);
            *o = if k2 == 0.0 { ZERO } else { -z / k2 };
        });
    })
}

/// Δ with the derivative wavenumbers, consistent with [`inv_laplace`].
pub fn laplacian(f: &BoxField) -> Result<BoxField> {
    let comps = f.components();
    with_spectrum(f, comps, |g, inp, out| {
        let len = g.len();
        out.par_iter_mut()
            .zip(inp.par_iter())
            .enumerate()
            .for_each(|(i, (o, z))| *o = -z * kd_squared(g, i % len));
    })
}

/// 2/3-rule truncation: modes with |m| > n/3 on any axis are removed.
pub fn dealias(f: &BoxField) -> Result<BoxField> {
    let comps = f.components();
    with_spectrum(f, comps, |g, inp, out| {
        let len = g.len();
        let keep = dealias_mask(g);
        out.par_iter_mut()
            .zip(inp.par_iter())
            .enumerate()
            .for_each(|(i, (o, z))| *o = if keep[i % len] { *z } else { ZERO });
    })
}

pub(crate) fn dealias_mask(g: &BoxGrid) -> Vec<bool> {
    let n = g.n();
    let cut = (n / 3) as i64;
    let axis: Vec<bool> = (0..n).map(|i| g.mode(i).abs() <= cut).collect();
    (0..g.len()).map(|idx| axis[idx / (n * n)] && axis[(idx / n) % n] && axis[idx % n]).collect()
}

/// Pointwise tensor u ⊗ v (slot 3j + l = u_j v_l), physical.
pub fn tensor_product(u: &BoxField, v: &BoxField) -> Result<BoxField> {
    require(u, &[3], "tensor_product")?;
    require(v, &[3], "tensor_product")?;
    if u.grid() != v.grid() {
        return Err(Error::Grid("tensor_product operands on different grids".into()));
    }
    let (up, vp) = (u.as_physical()?, v.as_physical()?);
    let (a, b) = (up.physical_values()?, vp.physical_values()?);
    let len = u.grid().len();
    let mut out = vec![0.0; 9 * len];
    for j in 0..3 {
        for l in 0..3 {
            let slot = 3 * j + l;
            out[slot * len..(slot + 1) * len]
                .par_iter_mut()
                .enumerate()
                .for_each(|(i, o)| *o = a[j * len + i] * b[l * len + i]);
        }
    }
    BoxField::from_physical(*u.grid(), 9, out)
}

/// Dealiased ℙ∇·(u⊗v) in spectral form, and optionally ℙ∇·(v⊗u) from the
/// same products (slot (j, l) of u⊗v is slot (l, j) of v⊗u). Products are
/// transformed two at a time so only the 3-component outputs stay resident.
pub(crate) fn leray_divergence_products(
    u: &BoxField,
    v: &BoxField,
    transpose: bool,
) -> Result<(BoxField, Option<BoxField>)> {
    require(u, &[3], "nonlinear term")?;
    require(v, &[3], "nonlinear term")?;
    let g = *u.grid();
    if g != *v.grid() {
        return Err(Error::Grid("nonlinear term operands on different grids".into()));
    }
    let (up, vp) = (u.as_physical()?, v.as_physical()?);
    let (a, b) = (up.physical_values()?, vp.physical_values()?);
    let same = std::ptr::eq(a, b);
    let len = g.len();
    let slots: Vec<(usize, usize)> = if same {
        (0..3).flat_map(|j| (j..3).map(move |l| (j, l))).collect()
    } else {
        (0..3).flat_map(|j| (0..3).map(move |l| (j, l))).collect()
    };
    let keep = dealias_mask(&g);
    let kv: Vec<[f64; 3]> = (0..len).into_par_iter().map(|i| g.k_vector(i)).collect();
    let plan = crate::fft::plan(g.n());
    let mut n_uv = vec![ZERO; 3 * len];
    let mut n_vu = if transpose && !same { Some(vec![ZERO; 3 * len]) } else { None };
    let product = |(j, l): (usize, usize)| -> Vec<f64> {
        (0..len).into_par_iter().map(|i| a[j * len + i] * b[l * len + i]).collect()
    };
    let mut accumulate = |(j, l): (usize, usize), f: &[Complex64]| {
        // ∂_j F_jl feeds component l; for a symmetric product also ∂_l F_lj feeds j
        let targets: Vec<(usize, usize)> = if same && j != l { vec![(j, l), (l, j)] } else { vec![(j, l)] };
        for (dj, comp) in targets {
            n_uv[comp * len..(comp + 1) * len].par_iter_mut().enumerate().for_each(|(i, o)| {
                if keep[i] {
                    *o += I * kv[i][dj] * f[i];
                }
            });
        }
        if let Some(t) = n_vu.as_mut() {
            t[j * len..(j + 1) * len].par_iter_mut().enumerate().for_each(|(i, o)| {
                if keep[i] {
                    *o += I * kv[i][l] * f[i];
                }
            });
        }
    };
    for pair in slots.chunks(2) {
        let pa = product(pair[0]);
        if pair.len() == 2 {
            let pb = product(pair[1]);
            let (fa, fb) = plan.forward_real(&pa, Some(&pb));
            accumulate(pair[0], &fa);
            accumulate(pair[1], &fb.expect("paired transform"));
        } else {
            let (fa, _) = plan.forward_real(&pa, None);
            accumulate(pair[0], &fa);
        }
    }
    let project = |mut c: Vec<Complex64>| -> Result<BoxField> {
        let out: Vec<[Complex64; 3]> = (0..len)
            .into_par_iter()
            .map(|i| leray_mode(kv[i], &[c[i], c[len + i], c[2 * len + i]]))
            .collect();
        for (i, m) in out.iter().enumerate() {
            for (comp, z) in m.iter().enumerate() {
                c[comp * len + i] = *z;
            }
        }
        BoxField::from_spectral(g, 3, c)
    };
    let first = project(n_uv)?;
    let second = match (transpose, same, n_vu) {
        (true, true, _) => Some(first.clone()),
        (_, _, Some(t)) => Some(project(t)?),
        _ => None,
    };
    Ok((first, second))
}

/// Pressure P = −Δ⁻¹∇·∇·(u⊗u) with a dealiased product; mean of P set to 0.
pub fn pressure_from_velocity(u: &BoxField) -> Result<BoxField> {
    require(u, &[3], "pressure_from_velocity")?;
    let repr = u.representation();
    let tensor = tensor_product(u, u)?.to_spectral()?;
    let p = with_spectrum(&tensor, 1, |g, inp, out| {
        let keep = dealias_mask(g);
        per_mode::<9, 1>(g, inp, out, |idx, m| {
            let k = g.k_vector(idx);
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            if k2 == 0.0 || !keep[idx] {
                return [ZERO];
            }
            let mut s = ZERO;
            for j in 0..3 {
                for l in 0..3 {
                    s += m[3 * j + l] * (k[j] * k[l]);
                }
            }
            [-s / k2]
        })
    })?;
    p.into_representation(repr)
}

/// Galilean frame shift: returns y ↦ f(y + ξt) by the phase e^{i k·ξt}.
/// At the Nyquist index the phase is replaced by cos(k d), which keeps the
/// result real and makes lattice shifts exact.
pub fn galilean_shift(f: &BoxField, xi: [f64; 3], t: f64) -> Result<BoxField> {
    let d = [xi[0] * t, xi[1] * t, xi[2] * t];
    if d == [0.0; 3] {
        return Ok(f.clone());
    }
    let comps = f.components();
    with_spectrum(f, comps, |g, inp, out| {
        let n = g.n();
        let len = g.len();
        let axis = |a: usize| -> Vec<Complex64> {
            (0..n)
                .map(|i| {
                    let k = g.wavenumber(i);
                    if i == n / 2 {
                        Complex64::new((k * d[a]).cos(), 0.0)
                    } else {
                        Complex64::from_polar(1.0, k * d[a])
                    }
                })
                .collect()
        };
        let (px, py, pz) = (axis(0), axis(1), axis(2));
        out.par_iter_mut().zip(inp.par_iter()).enumerate().for_each(|(i, (o, z))| {
            let idx = i % len;
            *o = z * px[idx / (n * n)] * py[(idx / n) % n] * pz[idx % n];
        });
    })
}

/// Σ_{j,l} |∂_j u_l|² as a physical scalar field.
pub fn gradient_squared(u: &BoxField) -> Result<BoxField> {
    let grad = gradient(u)?.into_representation(Representation::Physical)?;
    let len = u.grid().len();
    let v = grad.physical_values()?;
    let comps = grad.components();
    let out: Vec<f64> = (0..len).map(|i| (0..comps).map(|c| v[c * len + i].powi(2)).sum()).collect();
    BoxField::from_physical(*u.grid(), 1, out)
}

/// ‖∇u‖²_{L²(box)} by Parseval with the full |k|² (consistent with the heat symbol).
pub fn gradient_l2_squared(u: &BoxField) -> Result<f64> {
    let s = u.as_spectral()?;
    let g = *u.grid();
    let len = g.len();
    let vol = (2.0 * g.half_width()).powi(3);
    let c = s.spectral_values()?;
    Ok(vol * c.par_iter().enumerate().map(|(i, z)| g.k_squared(i % len) * z.norm_sqr()).sum::<f64>())
}

/// max|∇·u| / max|∇u|, the relative divergence of a vector field (0 for u = 0).
pub fn relative_divergence(u: &BoxField) -> Result<f64> {
    let div = divergence(u)?.into_representation(Representation::Physical)?.max_abs()?;
    let grad = gradient(u)?.into_representation(Representation::Physical)?.max_abs()?;
    Ok(if grad == 0.0 { 0.0 } else { div / grad })
}
