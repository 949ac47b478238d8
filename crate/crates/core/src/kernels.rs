//! Translation-invariant radial kernels `k(x, y) = exp(-rho(|x - y| / tau))`.
//!
//! Kernels are unnormalized: `k(x, x) = 1` for the built-in families and no
//! normalizing constant appears anywhere downstream. The log-gradient in the
//! first argument has the radial form
//!
//! ```text
//! grad_x log k(x, y) = b(r) (y - x) / tau^2,    b(r) = rho'(r / tau) / (r / tau)
//! ```
//!
//! so the Gaussian family has `b = 1` and the Laplace family `b = tau / r`.

use ndarray::ArrayView2;

use crate::error::{check_dim, Error, Result};

/// Caller-supplied radial profile. Both `rho` and its derivative must be
/// provided; nothing here differentiates `rho` numerically.
#[derive(Clone, Copy)]
pub struct RadialProfile {
    pub rho: fn(f64) -> f64,
    pub rho_prime: fn(f64) -> f64,
    /// `true` when `rho'(u) / u` diverges as `u -> 0+` (cusp at the origin).
    pub singular_at_zero: bool,
}

impl std::fmt::Debug for RadialProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RadialProfile")
            .field("singular_at_zero", &self.singular_at_zero)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy)]
pub enum KernelFamily {
    /// `rho(u) = u^2 / 2`
    Gaussian,
    /// `rho(u) = u`
    Laplace,
    Custom(RadialProfile),
}

#[derive(Debug, Clone, Copy)]
pub struct RadialKernel {
    family: KernelFamily,
    tau: f64,
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidInput(format!("bandwidth must be positive and finite, got {tau}")));
    }
    Ok(())
}

impl RadialKernel {
    pub fn new(family: KernelFamily, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        Ok(Self { family, tau })
    }

    pub fn gaussian(tau: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, tau)
    }

    pub fn laplace(tau: f64) -> Result<Self> {
        Self::new(KernelFamily::Laplace, tau)
    }

    pub fn custom(profile: RadialProfile, tau: f64) -> Result<Self> {
        Self::new(KernelFamily::Custom(profile), tau)
    }

    /// Same family with a different bandwidth.
    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        Self::new(self.family, tau)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self.family, KernelFamily::Gaussian)
    }

    /// Whether `b(r)` blows up at `r = 0`, making coincident points special.
    pub fn is_singular_at_zero(&self) -> bool {
        match self.family {
            KernelFamily::Gaussian => false,
            KernelFamily::Laplace => true,
            KernelFamily::Custom(p) => p.singular_at_zero,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Laplace => "laplace",
            KernelFamily::Custom(_) => "custom",
        }
    }

    #[inline]
    pub fn rho(&self, u: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => 0.5 * u * u,
            KernelFamily::Laplace => u,
            KernelFamily::Custom(p) => (p.rho)(u),
        }
    }

    #[inline]
    fn rho_prime(&self, u: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => u,
            KernelFamily::Laplace => 1.0,
            KernelFamily::Custom(p) => (p.rho_prime)(u),
        }
    }

    /// `log k` at distance `r`.
    #[inline]
    pub fn log_kernel_at(&self, r: f64) -> f64 {
        -self.rho(r / self.tau)
    }

    /// `log k` from a squared distance; avoids the square root for the Gaussian.
    #[inline]
    pub(crate) fn log_kernel_sq(&self, r2: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => -0.5 * r2 / (self.tau * self.tau),
            _ => self.log_kernel_at(r2.sqrt()),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim(x.len(), y.len())?;
        Ok(self.log_kernel_at(distance(x, y)).exp())
    }

    /// Radius-dependent reweighting `b(r) = rho'(r/tau) / (r/tau)`.
    pub fn b_weight(&self, r: f64) -> Result<f64> {
        if r < 0.0 || r.is_nan() {
            return Err(Error::InvalidInput(format!("radius must be nonnegative, got {r}")));
        }
        match self.family {
            KernelFamily::Gaussian => Ok(1.0),
            KernelFamily::Laplace if r == 0.0 => Err(Error::SingularAtZero),
            KernelFamily::Laplace => Ok(self.tau / r),
            // b(0) of a smooth custom profile is rho''(0), which the caller does
            // not supply; zero distance is a domain error for every custom profile.
            KernelFamily::Custom(_) if r == 0.0 => Err(Error::SingularAtZero),
            KernelFamily::Custom(_) => {
                let u = r / self.tau;
                Ok(self.rho_prime(u) / u)
            }
        }
    }

    /// `grad_x log k(x, y) = b(r) (y - x) / tau^2`.
    pub fn log_grad(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        check_dim(x.len(), y.len())?;
        let r = distance(x, y);
        let scale = self.b_weight(r)? / (self.tau * self.tau);
        Ok(x.iter().zip(y).map(|(xi, yi)| scale * (yi - xi)).collect())
    }
}

#[inline]
pub(crate) fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
pub(crate) fn distance(x: &[f64], y: &[f64]) -> f64 {
    squared_distance(x, y).sqrt()
}

/// How the bandwidth is chosen for a given dimension and query batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthPolicy {
    /// `tau = base * D^exponent`
    Fixed { base: f64, exponent: f64 },
    /// `tau = base * mean_i |x_i|` over the query batch.
    Adaptive { base: f64 },
}

impl BandwidthPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BandwidthPolicy::Fixed { base, exponent } => {
                check_tau(base)?;
                if !(exponent >= 0.0) {
                    return Err(Error::InvalidInput(format!("bandwidth exponent must be >= 0, got {exponent}")));
                }
            }
            BandwidthPolicy::Adaptive { base } => check_tau(base)?,
        }
        Ok(())
    }

    pub fn resolve(&self, dim: usize, queries: ArrayView2<'_, f64>) -> Result<f64> {
        self.validate()?;
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        match *self {
            BandwidthPolicy::Fixed { base, exponent } => Ok(base * (dim as f64).powf(exponent)),
            BandwidthPolicy::Adaptive { base } => {
                if queries.nrows() == 0 {
                    return Err(Error::DegenerateBandwidth("empty query batch".into()));
                }
                check_dim(dim, queries.ncols())?;
                let mean_norm = queries
                    .rows()
                    .into_iter()
                    .map(|row| row.dot(&row).sqrt())
                    .sum::<f64>()
                    / queries.nrows() as f64;
                if !(mean_norm > 0.0) {
                    return Err(Error::DegenerateBandwidth("query batch has zero mean norm".into()));
                }
                Ok(base * mean_norm)
            }
        }
    }
}

/// `c_D = M2 / M0` with `M0 = int exp(-|z|) dz` and `M2 = int z_1^2 exp(-|z|) dz`
/// over `R^D`.
///
/// In polar form the sphere area cancels and `E[z_1^2] = r^2 / D`, leaving
/// `c_D = (1/D) int r^{D+1} e^{-r} dr / int r^{D-1} e^{-r} dr`, which is
/// integrated numerically on `[0, 50 + 10 D]`.
pub fn laplace_moment_ratio(dim: usize) -> Result<f64> {
    if dim == 0 {
        return Err(Error::InvalidInput("dimension must be >= 1".into()));
    }
    let d = dim as f64;
    // Each integrand r^p e^{-r} is divided by its own peak value, reached at
    // r = p, so both stay O(1) and the tolerance is effectively relative.
    let moment = |power: f64| -> (f64, f64) {
        let log_peak = if power > 0.0 { power * power.ln() - power } else { 0.0 };
        let f = move |r: f64| -> f64 {
            let log_pow = if power == 0.0 { 0.0 } else if r == 0.0 { f64::NEG_INFINITY } else { power * r.ln() };
            (log_pow - r - log_peak).exp()
        };
        (integrate(f, 0.0, 50.0 + 10.0 * d, 1e-10), log_peak)
    };
    let (m0, lp0) = moment(d - 1.0);
    let (m2, lp2) = moment(d + 1.0);
    Ok((lp2 - lp0).exp() * m2 / (d * m0))
}

/// Adaptive Simpson quadrature over a fixed initial partition.
fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> f64 {
    const PANELS: usize = 256;
    let h = (b - a) / PANELS as f64;
    let panel_tol = abs_tol / PANELS as f64;
    (0..PANELS)
        .map(|i| {
            let lo = a + i as f64 * h;
            let hi = lo + h;
            let mid = 0.5 * (lo + hi);
            let (flo, fmid, fhi) = (f(lo), f(mid), f(hi));
            let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
            simpson_refine(&f, lo, hi, flo, fmid, fhi, whole, panel_tol, 30)
        })
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn simpson_refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    simpson_refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn eval_matches_scalar_exponentials() {
        let lap = RadialKernel::laplace(1.0).unwrap();
        let gau = RadialKernel::gaussian(1.0).unwrap();
        let x = [0.0, 0.0];
        let y = [0.6, 0.8];
        assert!((lap.eval(&x, &y).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!((gau.eval(&x, &y).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
        assert!((lap.eval(&x, &y).unwrap() - 0.367879).abs() < 1e-6);
        assert!((gau.eval(&x, &y).unwrap() - 0.606531).abs() < 1e-6);
        assert_eq!(lap.eval(&y, &y).unwrap(), 1.0);
        assert_eq!(gau.eval(&y, &y).unwrap(), 1.0);
    }

    #[test]
    fn eval_rejects_mismatched_dims() {
        let k = RadialKernel::gaussian(1.0).unwrap();
        assert!(matches!(k.eval(&[0.0], &[0.0, 1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn nonpositive_tau_rejected() {
        assert!(RadialKernel::laplace(0.0).is_err());
        assert!(RadialKernel::gaussian(-1.0).is_err());
        assert!(RadialKernel::gaussian(f64::NAN).is_err());
    }

    #[test]
    fn b_weight_cases() {
        let g = RadialKernel::gaussian(2.0).unwrap();
        assert_eq!(g.b_weight(5.0).unwrap(), 1.0);
        assert_eq!(g.b_weight(0.0).unwrap(), 1.0);
        let l = RadialKernel::laplace(1.0).unwrap();
        assert_eq!(l.b_weight(2.0).unwrap(), 0.5);
        assert_eq!(l.b_weight(0.25).unwrap(), 4.0);
        assert!(matches!(l.b_weight(0.0), Err(Error::SingularAtZero)));
    }

    #[test]
    fn log_grad_examples() {
        let g = RadialKernel::gaussian(1.0).unwrap();
        assert_eq!(g.log_grad(&[0.0, 0.0], &[2.0, 0.0]).unwrap(), vec![2.0, 0.0]);
        let l = RadialKernel::laplace(0.5).unwrap();
        let v = l.log_grad(&[0.0, 0.0], &[3.0, 0.0]).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-15 && v[1] == 0.0);
        let l1 = RadialKernel::laplace(1.0).unwrap();
        let v = l1.log_grad(&[0.0, 0.0], &[0.0, -4.0]).unwrap();
        assert!(v[0] == 0.0 && (v[1] + 1.0).abs() < 1e-15);
        assert!(matches!(l1.log_grad(&[1.0], &[1.0]), Err(Error::SingularAtZero)));
    }

    #[test]
    fn custom_profile_reproduces_laplace() {
        let profile = RadialProfile { rho: |u| u, rho_prime: |_| 1.0, singular_at_zero: true };
        let c = RadialKernel::custom(profile, 0.7).unwrap();
        let l = RadialKernel::laplace(0.7).unwrap();
        let (x, y) = ([0.3, -1.0, 2.0], [1.0, 0.5, -0.25]);
        assert!((c.eval(&x, &y).unwrap() - l.eval(&x, &y).unwrap()).abs() < 1e-15);
        let (gc, gl) = (c.log_grad(&x, &y).unwrap(), l.log_grad(&x, &y).unwrap());
        for (a, b) in gc.iter().zip(&gl) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn bandwidth_resolution() {
        let empty = ndarray::Array2::<f64>::zeros((0, 100));
        let fixed = BandwidthPolicy::Fixed { base: 0.3, exponent: 0.0 };
        assert_eq!(fixed.resolve(100, empty.view()).unwrap(), 0.3);
        let fixed = BandwidthPolicy::Fixed { base: 0.3, exponent: 0.5 };
        assert!((fixed.resolve(4, empty.view()).unwrap() - 0.6).abs() < 1e-15);

        let batch = array![[1.0, 0.0], [0.0, 3.0]];
        let adaptive = BandwidthPolicy::Adaptive { base: 0.3 };
        assert!((adaptive.resolve(2, batch.view()).unwrap() - 0.6).abs() < 1e-15);

        let zeros = ndarray::Array2::<f64>::zeros((3, 2));
        assert!(matches!(adaptive.resolve(2, zeros.view()), Err(Error::DegenerateBandwidth(_))));
        let none = ndarray::Array2::<f64>::zeros((0, 2));
        assert!(matches!(adaptive.resolve(2, none.view()), Err(Error::DegenerateBandwidth(_))));
        assert!(BandwidthPolicy::Fixed { base: 0.3, exponent: -1.0 }.validate().is_err());
    }

    #[test]
    fn moment_ratio_small_dims() {
        assert!((laplace_moment_ratio(1).unwrap() - 2.0).abs() < 1e-8);
        assert!((laplace_moment_ratio(2).unwrap() - 3.0).abs() < 1e-8);
        assert!((laplace_moment_ratio(10).unwrap() - 11.0).abs() < 1e-7);
        assert!(laplace_moment_ratio(0).is_err());
    }
}
