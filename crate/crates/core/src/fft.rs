//! Cubic 3D FFT built from rustfft line transforms.
//!
//! Layout is (i, j, k) with k fastest. Forward transforms divide by n³.
//! Two real fields share one complex transform (f + i g) and are separated
//! through Hermitian symmetry afterwards.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Fft3 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

pub(crate) fn plan(n: usize) -> Arc<Fft3> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Fft3>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("fft plan cache poisoned");
    map.entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Fft3 {
                n,
                fwd: planner.plan_fft_forward(n),
                inv: planner.plan_fft_inverse(n),
            })
        })
        .clone()
}

impl Fft3 {
    fn lines(&self, data: &mut [Complex64], inverse: bool) {
        let fft = if inverse { &self.inv } else { &self.fwd };
        let chunk = self.n * self.n;
        data.par_chunks_mut(chunk).for_each(|c| fft.process(c));
    }

    /// In-place 3D transform, unnormalized in both directions.
    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let n2 = n * n;
        assert_eq!(data.len(), n2 * n);

        // k axis: contiguous lines
        self.lines(data, inverse);

        // j axis: transpose each i-plane
        let fft = if inverse { &self.inv } else { &self.fwd };
        data.par_chunks_mut(n2).for_each(|plane| {
            let mut t = vec![Complex64::new(0.0, 0.0); n2];
            for j in 0..n {
                for k in 0..n {
                    t[k * n + j] = plane[j * n + k];
                }
            }
            fft.process(&mut t);
            for j in 0..n {
                for k in 0..n {
                    plane[j * n + k] = t[k * n + j];
                }
            }
        });

        // i axis: full transpose to (j, k, i)
        let mut t = vec![Complex64::new(0.0, 0.0); n2 * n];
        t.par_chunks_mut(n2).enumerate().for_each(|(j, dst)| {
            for k in 0..n {
                for i in 0..n {
                    dst[k * n + i] = data[(i * n + j) * n + k];
                }
            }
        });
        self.lines(&mut t, inverse);
        data.par_chunks_mut(n2).enumerate().for_each(|(i, dst)| {
            for j in 0..n {
                for k in 0..n {
                    dst[j * n + k] = t[(j * n + k) * n + i];
                }
            }
        });
    }

    pub(crate) fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, false);
        let scale = 1.0 / (self.n * self.n * self.n) as f64;
        data.par_iter_mut().for_each(|z| *z *= scale);
    }

    pub(crate) fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, true);
    }

    /// Flat index of the wavevector −k.
    #[inline]
    pub(crate) fn negate(&self, idx: usize) -> usize {
        let n = self.n;
        let (i, j, k) = (idx / (n * n), (idx / n) % n, idx % n);
        (((n - i) % n) * n + (n - j) % n) * n + (n - k) % n
    }

    /// Forward transform of one or two real fields.
    pub(crate) fn forward_real(&self, a: &[f64], b: Option<&[f64]>) -> (Vec<Complex64>, Option<Vec<Complex64>>) {
        let mut z: Vec<Complex64> = match b {
            Some(b) => a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect(),
            None => a.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        };
        self.forward(&mut z);
        if b.is_none() {
            return (z, None);
        }
        let len = z.len();
        let mut fa = vec![Complex64::new(0.0, 0.0); len];
        let mut fb = vec![Complex64::new(0.0, 0.0); len];
        for idx in 0..len {
            let zk = z[idx];
            let zm = z[self.negate(idx)].conj();
            fa[idx] = (zk + zm) * 0.5;
            fb[idx] = (zk - zm) * Complex64::new(0.0, -0.5);
        }
        (fa, Some(fb))
    }

    /// Inverse transform of one or two Hermitian spectra to real fields.
    pub(crate) fn inverse_real(&self, a: &[Complex64], b: Option<&[Complex64]>) -> (Vec<f64>, Option<Vec<f64>>) {
        let mut z: Vec<Complex64> = match b {
            Some(b) => a.iter().zip(b).map(|(&x, &y)| x + Complex64::new(-y.im, y.re)).collect(),
            None => a.to_vec(),
        };
        self.inverse(&mut z);
        let re = z.iter().map(|c| c.re).collect();
        let im = b.map(|_| z.iter().map(|c| c.im).collect());
        (re, im)
    }
}
