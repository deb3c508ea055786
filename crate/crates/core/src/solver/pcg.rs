//! Jacobi-preconditioned conjugate gradient.

use crate::error::Result;
use crate::real::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PcgOutcome {
    pub iters: usize,
    /// `pᵀAp <= 0` was met; the iterate before that step is returned.
    pub indefinite: bool,
    /// A scalar of the recurrence became NaN or infinite.
    pub non_finite: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PcgSettings {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

/// Work vectors, kept across calls so that a solve allocates them once.
#[derive(Clone, Debug, Default)]
pub struct PcgBuffers<T> {
    pub r: Vec<T>,
    pub z: Vec<T>,
    pub p: Vec<T>,
    pub ap: Vec<T>,
}

impl<T: Real> PcgBuffers<T> {
    pub fn new(n: usize) -> Self {
        PcgBuffers { r: vec![T::zero(); n], z: vec![T::zero(); n], p: vec![T::zero(); n], ap: vec![T::zero(); n] }
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn mask_out<T: Real>(v: &mut [T], excluded: &[bool]) {
    for (x, &e) in v.iter_mut().zip(excluded) {
        if e {
            *x = T::zero();
        }
    }
}

/// Solves `A δ = b` from `δ = 0`.
///
/// `m` is the Jacobi diagonal (`z = r / m`); excluded entries of every vector are
/// held at zero. Iteration stops after `max_iters` steps or once
/// `rᵀz <= max(rel_tol² · r₀ᵀz₀, abs_tol)`.
pub fn pcg<T: Real>(
    apply_a: &mut dyn FnMut(&[T], &mut [T]) -> Result<()>,
    b: &[T],
    m: &[T],
    excluded: &[bool],
    settings: PcgSettings,
    delta: &mut [T],
    buf: &mut PcgBuffers<T>,
) -> Result<PcgOutcome> {
    let n = b.len();
    let PcgBuffers { r, z, p, ap } = buf;
    delta.fill(T::zero());
    r.copy_from_slice(b);
    mask_out(r, excluded);
    for i in 0..n {
        z[i] = r[i] / m[i];
    }
    mask_out(z, excluded);
    p.copy_from_slice(z);
    let mut rz = dot(r, z);
    let mut out = PcgOutcome::default();
    if !rz.is_finite() {
        out.non_finite = true;
        return Ok(out);
    }
    let threshold = T::from_f64(settings.rel_tol * settings.rel_tol) * rz;
    let threshold = threshold.max(T::from_f64(settings.abs_tol));
    while out.iters < settings.max_iters && rz > threshold {
        apply_a(p, ap)?;
        mask_out(ap, excluded);
        let pap = dot(p, ap);
        if !pap.is_finite() {
            out.non_finite = true;
            break;
        }
        if pap <= T::zero() {
            out.indefinite = true;
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            delta[i] = delta[i] + alpha * p[i];
            r[i] = r[i] - alpha * ap[i];
            z[i] = r[i] / m[i];
        }
        mask_out(delta, excluded);
        mask_out(z, excluded);
        let rz_new = dot(r, z);
        out.iters += 1;
        if !rz_new.is_finite() {
            out.non_finite = true;
            break;
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        mask_out(p, excluded);
    }
    Ok(out)
}
