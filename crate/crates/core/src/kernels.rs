//! Compactly supported symmetric kernels and their moment constants
//! `k_ij = ∫ u^i K(u)^j du`.
//!
//! Only compact kernels are offered: the asymptotic variance formulas of the
//! overlap estimators need a kernel that is a density, symmetric about zero,
//! vanishes outside a bounded interval and has finite variance. The Gaussian
//! kernel fails the compact-support condition and is deliberately absent.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};

/// Largest power of `u` and of `K` for which moments are tabulated.
pub const MAX_MOMENT_I: u32 = 4;
pub const MAX_MOMENT_J: u32 = 2;

/// Point count of the Simpson rule used for moments without a closed form.
pub const MOMENT_QUADRATURE_POINTS: usize = 2001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuiltinKernel {
    Epanechnikov,
    Triangular,
    Biweight,
    Box,
}

impl BuiltinKernel {
    pub const ALL: [BuiltinKernel; 4] = [
        BuiltinKernel::Epanechnikov,
        BuiltinKernel::Triangular,
        BuiltinKernel::Biweight,
        BuiltinKernel::Box,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinKernel::Epanechnikov => "epanechnikov",
            BuiltinKernel::Triangular => "triangular",
            BuiltinKernel::Biweight => "biweight",
            BuiltinKernel::Box => "box",
        }
    }

    #[inline]
    fn eval(self, u: f64) -> f64 {
        let a = u.abs();
        if !(a <= 1.0) {
            return 0.0;
        }
        match self {
            BuiltinKernel::Epanechnikov => 0.75 * (1.0 - u * u),
            BuiltinKernel::Triangular => 1.0 - a,
            BuiltinKernel::Biweight => {
                let t = 1.0 - u * u;
                0.9375 * t * t
            }
            BuiltinKernel::Box => 0.5,
        }
    }

    /// Closed-form `k_ij` on the standard support [-1, 1].
    fn closed_moment(self, i: u32, j: u32) -> f64 {
        if i % 2 == 1 {
            return 0.0;
        }
        // ∫_{-1}^{1} u^i (1 - u^2)^p du = 2 Σ_k C(p,k) (-1)^k / (i + 2k + 1)
        let even_poly = |coeffs: &[f64]| -> f64 {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c / (i as f64 + 2.0 * k as f64 + 1.0))
                .sum::<f64>()
                * 2.0
        };
        let fi = i as f64;
        match (self, j) {
            (BuiltinKernel::Epanechnikov, 1) => 0.75 * even_poly(&[1.0, -1.0]),
            (BuiltinKernel::Epanechnikov, _) => 0.5625 * even_poly(&[1.0, -2.0, 1.0]),
            (BuiltinKernel::Biweight, 1) => 0.9375 * even_poly(&[1.0, -2.0, 1.0]),
            (BuiltinKernel::Biweight, _) => {
                0.878_906_25 * even_poly(&[1.0, -4.0, 6.0, -4.0, 1.0])
            }
            // ∫_{-1}^{1} u^i (1 - |u|)^j du = 2 ∫_0^1 u^i (1 - u)^j du
            (BuiltinKernel::Triangular, 1) => 2.0 * (1.0 / (fi + 1.0) - 1.0 / (fi + 2.0)),
            (BuiltinKernel::Triangular, _) => {
                2.0 * (1.0 / (fi + 1.0) - 2.0 / (fi + 2.0) + 1.0 / (fi + 3.0))
            }
            (BuiltinKernel::Box, 1) => 1.0 / (fi + 1.0),
            (BuiltinKernel::Box, _) => 0.5 / (fi + 1.0),
        }
    }
}

impl fmt::Display for BuiltinKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BuiltinKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "epanechnikov" | "epan" => Ok(BuiltinKernel::Epanechnikov),
            "triangular" | "triangle" => Ok(BuiltinKernel::Triangular),
            "biweight" | "quartic" => Ok(BuiltinKernel::Biweight),
            "box" | "uniform" | "rectangular" => Ok(BuiltinKernel::Box),
            "gaussian" | "normal" => Err(Error::invalid(
                "the gaussian kernel has unbounded support and is not offered; \
                 choose epanechnikov, triangular, biweight or box",
            )),
            other => Err(Error::invalid(format!(
                "unknown kernel `{other}` (expected epanechnikov|triangular|biweight|box)"
            ))),
        }
    }
}

type KernelFn = dyn Fn(f64) -> f64 + Send + Sync;

#[derive(Clone)]
enum Shape {
    Builtin(BuiltinKernel),
    Custom(Arc<KernelFn>),
}

type MomentCache = [[f64; MAX_MOMENT_J as usize]; MAX_MOMENT_I as usize + 1];

/// A kernel together with its support half-width and lazily computed moments.
///
/// Cloning is cheap and clones share the moment cache.
#[derive(Clone)]
pub struct KernelSpec {
    name: String,
    half_width: f64,
    shape: Shape,
    moments: Arc<OnceLock<MomentCache>>,
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelSpec")
            .field("name", &self.name)
            .field("half_width", &self.half_width)
            .finish()
    }
}

impl PartialEq for KernelSpec {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.half_width == other.half_width
    }
}

impl From<BuiltinKernel> for KernelSpec {
    fn from(kind: BuiltinKernel) -> Self {
        KernelSpec::builtin(kind)
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::builtin(BuiltinKernel::Epanechnikov)
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.parse::<BuiltinKernel>().map(KernelSpec::builtin)
    }
}

impl KernelSpec {
    pub fn builtin(kind: BuiltinKernel) -> Self {
        KernelSpec {
            name: kind.name().to_string(),
            half_width: 1.0,
            shape: Shape::Builtin(kind),
            moments: Arc::new(OnceLock::new()),
        }
    }

    /// A user kernel supported on `[-half_width, half_width]`.
    ///
    /// The function is only called inside the support. Nonnegativity, symmetry
    /// and unit mass are checked numerically.
    pub fn custom<F>(name: impl Into<String>, half_width: f64, kernel: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::invalid(format!(
                "kernel half-width must be positive and finite, got {half_width}"
            )));
        }
        let spec = KernelSpec {
            name: name.into(),
            half_width,
            shape: Shape::Custom(Arc::new(kernel)),
            moments: Arc::new(OnceLock::new()),
        };

        let probes = 257;
        for k in 0..probes {
            let u = half_width * k as f64 / (probes - 1) as f64;
            let (a, b) = (spec.eval(u), spec.eval(-u));
            if !(a >= 0.0 && b >= 0.0) || !a.is_finite() {
                return Err(Error::invalid(format!(
                    "kernel `{}` is negative or non-finite at u = {u}",
                    spec.name
                )));
            }
            if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
                return Err(Error::invalid(format!(
                    "kernel `{}` is not symmetric at u = {u}",
                    spec.name
                )));
            }
        }
        let mass = spec.moment(0, 1)?;
        if (mass - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "kernel `{}` integrates to {mass}, not 1",
                spec.name
            )));
        }
        Ok(spec)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn builtin_kind(&self) -> Option<BuiltinKernel> {
        match self.shape {
            Shape::Builtin(kind) => Some(kind),
            Shape::Custom(_) => None,
        }
    }

    /// K(u); exactly zero outside `[-half_width, half_width]`.
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match &self.shape {
            Shape::Builtin(kind) => kind.eval(u),
            Shape::Custom(func) => {
                if u.abs() <= self.half_width {
                    func(u)
                } else {
                    0.0
                }
            }
        }
    }

    /// `k_ij = ∫ u^i K(u)^j du` for `i <= 4`, `1 <= j <= 2`.
    pub fn moment(&self, i: u32, j: u32) -> Result<f64> {
        if i > MAX_MOMENT_I || j == 0 || j > MAX_MOMENT_J {
            return Err(Error::MomentRange { i, j });
        }
        let table = self.moments.get_or_init(|| self.compute_moments());
        Ok(table[i as usize][j as usize - 1])
    }

    /// `∫ K²`, the constant scaling every asymptotic variance.
    pub fn k02(&self) -> f64 {
        self.moment(0, 2).expect("(0,2) is always in range")
    }

    /// `∫ u² K`, the constant scaling the leading bias term.
    pub fn k21(&self) -> f64 {
        self.moment(2, 1).expect("(2,1) is always in range")
    }

    fn compute_moments(&self) -> MomentCache {
        let mut table = [[0.0; MAX_MOMENT_J as usize]; MAX_MOMENT_I as usize + 1];
        for (i, row) in table.iter_mut().enumerate() {
            for (jj, cell) in row.iter_mut().enumerate() {
                let j = jj as u32 + 1;
                *cell = match self.shape {
                    Shape::Builtin(kind) => kind.closed_moment(i as u32, j),
                    Shape::Custom(_) => self.quadrature_moment(i as u32, j),
                };
            }
        }
        table
    }

    /// `k_ij` by composite Simpson over the support, independent of any closed form.
    pub fn quadrature_moment(&self, i: u32, j: u32) -> f64 {
        let m = MOMENT_QUADRATURE_POINTS;
        let a = self.half_width;
        let step = 2.0 * a / (m - 1) as f64;
        let mut acc = 0.0;
        for k in 0..m {
            // Pair symmetric nodes so odd moments of symmetric kernels cancel exactly.
            let u = if k < m / 2 {
                -a + k as f64 * step
            } else if k == m / 2 {
                0.0
            } else {
                a - (m - 1 - k) as f64 * step
            };
            let w = if k == 0 || k == m - 1 {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * u.powi(i as i32) * self.eval(u).powi(j as i32);
        }
        acc * step / 3.0
    }
}
