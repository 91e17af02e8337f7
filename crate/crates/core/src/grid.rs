//! Periodic cubic grid and fields on it.

use std::borrow::Cow;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;

/// Cubic grid of n³ points x_i = −L + i·h, h = 2L/n, periodic in every axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxGrid {
    n: usize,
    half_width: f64,
}

impl BoxGrid {
    pub fn new(n: usize, half_width: f64) -> Result<Self> {
        if n < 8 || n % 2 != 0 {
            return Err(Error::Grid(format!("n must be even and >= 8, got {n}")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::Grid(format!("half width must be positive, got {half_width}")));
        }
        Ok(Self { n, half_width })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    /// Number of points per component.
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    #[inline]
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let n = self.n;
        [self.coord(idx / (n * n)), self.coord((idx / n) % n), self.coord(idx % n)]
    }

    /// Signed mode number of FFT index i: 0..n/2−1, then −n/2..−1.
    #[inline]
    pub fn mode(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Angular wavenumber of FFT index i (Nyquist kept as −π/h).
    #[inline]
    pub fn wavenumber(&self, i: usize) -> f64 {
        self.mode(i) as f64 * PI / self.half_width
    }

    /// Wavenumber used by odd multipliers: zero at the Nyquist index so that
    /// derivative-type symbols keep Hermitian symmetry.
    #[inline]
    pub fn derivative_wavenumber(&self, i: usize) -> f64 {
        if i == self.n / 2 {
            0.0
        } else {
            self.wavenumber(i)
        }
    }

    /// Full |k|² of a flat spectral index.
    #[inline]
    pub fn k_squared(&self, idx: usize) -> f64 {
        let n = self.n;
        let (a, b, c) = (self.wavenumber(idx / (n * n)), self.wavenumber((idx / n) % n), self.wavenumber(idx % n));
        a * a + b * b + c * c
    }

    /// Derivative wavevector of a flat spectral index.
    #[inline]
    pub fn k_vector(&self, idx: usize) -> [f64; 3] {
        let n = self.n;
        [
            self.derivative_wavenumber(idx / (n * n)),
            self.derivative_wavenumber((idx / n) % n),
            self.derivative_wavenumber(idx % n),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Physical,
    Spectral,
}

#[derive(Debug, Clone, PartialEq)]
enum Values {
    Physical(Vec<f64>),
    Spectral(Vec<Complex64>),
}

/// Scalar (1), vector (3) or tensor (9) field, stored component-major.
/// Tensor component (j, l) sits at slot 3j + l.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxField {
    grid: BoxGrid,
    components: usize,
    values: Values,
}

fn check_components(c: usize) -> Result<()> {
    if matches!(c, 1 | 3 | 9) {
        Ok(())
    } else {
        Err(Error::Domain(format!("components must be 1, 3 or 9, got {c}")))
    }
}

impl BoxField {
    pub fn from_physical(grid: BoxGrid, components: usize, values: Vec<f64>) -> Result<Self> {
        check_components(components)?;
        if values.len() != components * grid.len() {
            return Err(Error::Domain(format!(
                "expected {} values, got {}",
                components * grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, components, values: Values::Physical(values) })
    }

    pub fn from_spectral(grid: BoxGrid, components: usize, values: Vec<Complex64>) -> Result<Self> {
        check_components(components)?;
        if values.len() != components * grid.len() {
            return Err(Error::Domain(format!(
                "expected {} coefficients, got {}",
                components * grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, components, values: Values::Spectral(values) })
    }

    pub fn zeros(grid: BoxGrid, components: usize) -> Result<Self> {
        Self::from_physical(grid, components, vec![0.0; components * grid.len()])
    }

    /// Physical field from a pointwise closure returning `components` values.
    pub fn from_fn(grid: BoxGrid, components: usize, f: impl Fn([f64; 3], &mut [f64])) -> Result<Self> {
        check_components(components)?;
        let len = grid.len();
        let mut values = vec![0.0; components * len];
        let mut buf = vec![0.0; components];
        for idx in 0..len {
            f(grid.point(idx), &mut buf);
            for (c, v) in buf.iter().enumerate() {
                values[c * len + idx] = *v;
            }
        }
        Self::from_physical(grid, components, values)
    }

    pub fn grid(&self) -> &BoxGrid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn representation(&self) -> Representation {
        match self.values {
            Values::Physical(_) => Representation::Physical,
            Values::Spectral(_) => Representation::Spectral,
        }
    }

    pub fn physical_values(&self) -> Result<&[f64]> {
        match &self.values {
            Values::Physical(v) => Ok(v),
            Values::Spectral(_) => Err(Error::Representation { expected: "physical" }),
        }
    }

    pub fn spectral_values(&self) -> Result<&[Complex64]> {
        match &self.values {
            Values::Spectral(v) => Ok(v),
            Values::Physical(_) => Err(Error::Representation { expected: "spectral" }),
        }
    }

    /// Physical values of one component.
    pub fn component(&self, c: usize) -> Result<&[f64]> {
        let len = self.grid.len();
        Ok(&self.physical_values()?[c * len..(c + 1) * len])
    }

    pub fn to_spectral(&self) -> Result<BoxField> {
        let v = self.physical_values()?;
        let len = self.grid.len();
        let plan = fft::plan(self.grid.n);
        let mut out = Vec::with_capacity(self.components * len);
        let mut c = 0;
        while c < self.components {
            let a = &v[c * len..(c + 1) * len];
            if c + 1 < self.components {
                let b = &v[(c + 1) * len..(c + 2) * len];
                let (fa, fb) = plan.forward_real(a, Some(b));
                out.extend(fa);
                out.extend(fb.expect("paired transform"));
                c += 2;
            } else {
                out.extend(plan.forward_real(a, None).0);
                c += 1;
            }
        }
        Ok(BoxField { grid: self.grid, components: self.components, values: Values::Spectral(out) })
    }

    pub fn to_physical(&self) -> Result<BoxField> {
        let v = self.spectral_values()?;
        let len = self.grid.len();
        let plan = fft::plan(self.grid.n);
        let mut out = Vec::with_capacity(self.components * len);
        let mut c = 0;
        while c < self.components {
            let a = &v[c * len..(c + 1) * len];
            if c + 1 < self.components {
                let b = &v[(c + 1) * len..(c + 2) * len];
                let (ra, rb) = plan.inverse_real(a, Some(b));
                out.extend(ra);
                out.extend(rb.expect("paired transform"));
                c += 2;
            } else {
                out.extend(plan.inverse_real(a, None).0);
                c += 1;
            }
        }
        Ok(BoxField { grid: self.grid, components: self.components, values: Values::Physical(out) })
    }

    /// Borrow as spectral, transforming if needed.
    pub fn as_spectral(&self) -> Result<Cow<'_, BoxField>> {
        match self.values {
            Values::Spectral(_) => Ok(Cow::Borrowed(self)),
            Values::Physical(_) => Ok(Cow::Owned(self.to_spectral()?)),
        }
    }

    /// Borrow as physical, transforming if needed.
    pub fn as_physical(&self) -> Result<Cow<'_, BoxField>> {
        match self.values {
            Values::Physical(_) => Ok(Cow::Borrowed(self)),
            Values::Spectral(_) => Ok(Cow::Owned(self.to_physical()?)),
        }
    }

    /// Convert to the requested representation.
    pub fn into_representation(self, r: Representation) -> Result<BoxField> {
        match (self.representation(), r) {
            (a, b) if a == b => Ok(self),
            (_, Representation::Spectral) => self.to_spectral(),
            (_, Representation::Physical) => self.to_physical(),
        }
    }

    fn check_compatible(&self, other: &BoxField) -> Result<()> {
        if self.grid != other.grid || self.components != other.components {
            return Err(Error::Grid("fields live on different grids or have different ranks".into()));
        }
        if self.representation() != other.representation() {
            return Err(Error::Representation {
                expected: match self.representation() {
                    Representation::Physical => "physical",
                    Representation::Spectral => "spectral",
                },
            });
        }
        Ok(())
    }

    /// a·self + b·other, same representation.
    pub fn lincomb(&self, a: f64, other: &BoxField, b: f64) -> Result<BoxField> {
        self.check_compatible(other)?;
        let values = match (&self.values, &other.values) {
            (Values::Physical(x), Values::Physical(y)) => {
                Values::Physical(x.iter().zip(y).map(|(x, y)| a * x + b * y).collect())
            }
            (Values::Spectral(x), Values::Spectral(y)) => {
                Values::Spectral(x.iter().zip(y).map(|(x, y)| x * a + y * b).collect())
            }
            _ => unreachable!(),
        };
        Ok(BoxField { grid: self.grid, components: self.components, values })
    }

    pub fn add(&self, other: &BoxField) -> Result<BoxField> {
        self.lincomb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &BoxField) -> Result<BoxField> {
        self.lincomb(1.0, other, -1.0)
    }

    pub fn scale(&self, a: f64) -> BoxField {
        let values = match &self.values {
            Values::Physical(x) => Values::Physical(x.iter().map(|x| a * x).collect()),
            Values::Spectral(x) => Values::Spectral(x.iter().map(|x| x * a).collect()),
        };
        BoxField { grid: self.grid, components: self.components, values }
    }

    /// Pointwise Euclidean magnitude over components (physical).
    pub fn magnitude(&self) -> Result<Vec<f64>> {
        let v = self.physical_values()?;
        let len = self.grid.len();
        Ok((0..len)
            .map(|idx| (0..self.components).map(|c| v[c * len + idx].powi(2)).sum::<f64>().sqrt())
            .collect())
    }

    /// Box L^p norm of the magnitude; p = ∞ gives the maximum.
    pub fn norm_lp(&self, p: f64) -> Result<f64> {
        let mag = self.magnitude()?;
        Ok(lp_of_values(&mag, p, self.grid.cell_volume()))
    }

    pub fn max_abs(&self) -> Result<f64> {
        Ok(self.physical_values()?.iter().fold(0.0f64, |m, v| m.max(v.abs())))
    }

    /// Box L² norm squared from the spectrum: (2L)³ Σ|f̂|².
    pub fn parseval_l2_squared(&self) -> Result<f64> {
        let v = self.spectral_values()?;
        let vol = (2.0 * self.grid.half_width).powi(3);
        Ok(vol * v.iter().map(|z| z.norm_sqr()).sum::<f64>())
    }
}

/// (h³ Σ |v|^p)^{1/p}, or max |v| for p = ∞.
pub(crate) fn lp_of_values(values: &[f64], p: f64, cell: f64) -> f64 {
    if p.is_infinite() {
        values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    } else {
        (cell * values.iter().map(|v| v.abs().powf(p)).sum::<f64>()).powf(1.0 / p)
    }
}
