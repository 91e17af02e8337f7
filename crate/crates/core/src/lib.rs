//! Spectral numerics for weighted mixed radial-angular norms, small-data
//! Navier–Stokes mild solutions, inequality verification and
//! parabolic-cylinder regularity probes on a periodic box.

pub mod decomposition;
pub mod error;
pub mod generators;
pub mod grid;
pub mod io;
pub mod lab;
pub mod norms;
pub mod picard;
pub mod probe;
pub mod quadrature;
pub mod sphere;
pub mod spectral;

mod fft;

pub use error::{Error, Result};
pub use grid::{BoxField, BoxGrid, Representation};
pub use sphere::{sample_on_sphere, sample_on_sphere_with, Interp, ShellSamples, SphereSpec, SphericalGrid};
