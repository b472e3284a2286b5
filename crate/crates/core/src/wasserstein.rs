//! W₂ distances between uniform-atom empirical measures.

use rand::Rng;
use rand::seq::index::sample;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;
use crate::scalar::Scalar;

/// Largest support handled by the exact assignment solver by default.
pub const DEFAULT_EXACT_CAP: usize = 512;

fn sq_dist<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(x, y)| (*x - *y) * (*x - *y)).sum()
}

/// `W₂(μ, δ_{x₀}) = (∫|x - x₀|² dμ)^{1/2}`; the product coupling is the only one.
pub fn w2_to_dirac<S: Scalar>(mu: &EmpiricalMeasure<S>, x0: &[S]) -> Result<S> {
    if x0.len() != mu.dim() {
        return Err(Error::input("Dirac location has the wrong dimension"));
    }
    let total: S = mu.atoms().map(|x| sq_dist(x, x0)).sum();
    Ok((total / S::count(mu.len())).sqrt())
}

fn sorted_scalars<S: Scalar>(m: &EmpiricalMeasure<S>) -> Vec<S> {
    let mut v = m.flat().to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite atoms"));
    v
}

/// Exact W₂ on the line between equal-size measures: the monotone coupling.
pub fn w2_1d<S: Scalar>(mu: &EmpiricalMeasure<S>, nu: &EmpiricalMeasure<S>) -> Result<S> {
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(Error::input("w2_1d needs one-dimensional measures"));
    }
    if mu.len() != nu.len() {
        return Err(Error::input("w2_1d needs equal atom counts"));
    }
    let (a, b) = (sorted_scalars(mu), sorted_scalars(nu));
    let total: S = a.iter().zip(&b).map(|(x, y)| (*x - *y) * (*x - *y)).sum();
    Ok((total / S::count(a.len())).sqrt())
}

/// Squared W₂ on the line between sorted atom lists of arbitrary sizes,
/// integrating the squared quantile difference over the merged breakpoints
/// `i/n ∪ j/m`. Coincides with the equal-size formula after replicating both
/// measures to `lcm(n, m)` atoms.
pub fn w2_sq_sorted_1d<S: Scalar>(a: &[S], b: &[S]) -> S {
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut total = S::zero();
    // Work in units of 1/(n m) to keep the breakpoints exact.
    let mut pos: usize = 0;
    while i < n && j < m {
        let next_a = (i + 1) * m;
        let next_b = (j + 1) * n;
        let next = next_a.min(next_b);
        let w = S::count(next - pos);
        let d = a[i] - b[j];
        total = total + w * d * d;
        pos = next;
        if next_a == next {
            i += 1;
        }
        if next_b == next {
            j += 1;
        }
    }
    total / S::count(n * m)
}

/// Exact W₂ on the line for measures of possibly different sizes.
pub fn w2_1d_unequal<S: Scalar>(mu: &EmpiricalMeasure<S>, nu: &EmpiricalMeasure<S>) -> Result<S> {
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(Error::input("w2_1d_unequal needs one-dimensional measures"));
    }
    Ok(w2_sq_sorted_1d(&sorted_scalars(mu), &sorted_scalars(nu)).sqrt())
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with potentials, `O(n³)`). Returns `assignment[row] = column`.
pub fn min_cost_assignment<S: Scalar>(cost: &[S], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n);
    let inf = S::infinity();
    // 1-based arrays; index 0 is the virtual root column.
    let mut u = vec![S::zero(); n + 1];
    let mut v = vec![S::zero(); n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] = u[p[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Exact W₂ between equal-size measures in any dimension via minimum-cost
/// assignment. Supports up to `cap` atoms.
pub fn w2_exact_capped<S: Scalar>(mu: &EmpiricalMeasure<S>, nu: &EmpiricalMeasure<S>, cap: usize) -> Result<S> {
    if mu.dim() != nu.dim() {
        return Err(Error::input("measures live in different dimensions"));
    }
    if mu.len() != nu.len() {
        return Err(Error::input("w2_exact needs equal atom counts"));
    }
    let n = mu.len();
    if n > cap {
        return Err(Error::input(format!(
            "{n} atoms exceed the exact solver cap of {cap}; use w2_sliced or product_coupling_bound"
        )));
    }
    let mut cost = Vec::with_capacity(n * n);
    for x in mu.atoms() {
        for y in nu.atoms() {
            cost.push(sq_dist(x, y));
        }
    }
    let assignment = min_cost_assignment(&cost, n);
    let total: S = assignment.iter().enumerate().map(|(i, j)| cost[i * n + j]).sum();
    Ok((total / S::count(n)).max(S::zero()).sqrt())
}

/// [`w2_exact_capped`] with the default cap.
pub fn w2_exact<S: Scalar>(mu: &EmpiricalMeasure<S>, nu: &EmpiricalMeasure<S>) -> Result<S> {
    w2_exact_capped(mu, nu, DEFAULT_EXACT_CAP)
}

/// Sliced W₂: root mean of squared one-dimensional W₂ over random unit
/// projections. A biased, scalable diagnostic; never used in coupling metrics.
pub fn w2_sliced<S: Scalar, R: Rng + ?Sized>(
    mu: &EmpiricalMeasure<S>,
    nu: &EmpiricalMeasure<S>,
    projections: usize,
    rng: &mut R,
) -> Result<S> {
    if mu.dim() != nu.dim() || mu.len() != nu.len() {
        return Err(Error::input("w2_sliced needs equal dimensions and atom counts"));
    }
    if projections == 0 {
        return Err(Error::input("at least one projection required"));
    }
    let d = mu.dim();
    let mut total = S::zero();
    let mut dir = vec![S::zero(); d];
    for _ in 0..projections {
        loop {
            for c in dir.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *c = S::lit(z);
            }
            let norm = dir.iter().map(|c| *c * *c).sum::<S>().sqrt();
            if norm > S::zero() {
                dir.iter_mut().for_each(|c| *c = *c / norm);
                break;
            }
        }
        let project = |m: &EmpiricalMeasure<S>| {
            let mut v: Vec<S> = m.atoms().map(|x| x.iter().zip(&dir).map(|(a, b)| *a * *b).sum()).collect();
            v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            v
        };
        total = total + w2_sq_sorted_1d(&project(mu), &project(nu));
    }
    Ok((total / S::count(projections)).sqrt())
}

/// `(mean |Y¹_i - Y²_i|²)^{1/2}`: the cost of the coupling that pairs samples
/// by index, an upper bound on W₂ between the two marginal laws.
pub fn product_coupling_bound<S: Scalar, P: AsRef<[S]>>(y1: &[P], y2: &[P]) -> Result<S> {
    if y1.len() != y2.len() || y1.is_empty() {
        return Err(Error::input("paired samples must have equal, positive length"));
    }
    let total: S = y1.iter().zip(y2).map(|(a, b)| sq_dist(a.as_ref(), b.as_ref())).sum();
    Ok((total / S::count(y1.len())).sqrt())
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Squared W₂ between populations of possibly different sizes.
///
/// Equal sizes use the exact solvers. Otherwise: on the line the exact
/// quantile coupling (identical to replicating both measures to the least
/// common multiple of the sizes); in higher dimension, replication to the
/// least common multiple when `n · m ≤ cap²` and the multiple fits under
/// `cap`, else the larger population is subsampled without replacement down to
/// the smaller size with a draw from `rng`.
pub fn population_w2_sq<S: Scalar, R: Rng + ?Sized>(
    small: &EmpiricalMeasure<S>,
    large: &EmpiricalMeasure<S>,
    cap: usize,
    rng: &mut R,
) -> Result<S> {
    if small.dim() != large.dim() {
        return Err(Error::input("measures live in different dimensions"));
    }
    let (n, m) = (small.len(), large.len());
    if small.dim() == 1 {
        return Ok(w2_sq_sorted_1d(&sorted_scalars(small), &sorted_scalars(large)));
    }
    if n == m {
        let w = w2_exact_capped(small, large, cap)?;
        return Ok(w * w);
    }
    let lcm = n / gcd(n, m) * m;
    if n.saturating_mul(m) <= cap * cap && lcm <= cap {
        let w = w2_exact_capped(&small.replicate(lcm / n), &large.replicate(lcm / m), cap)?;
        return Ok(w * w);
    }
    let (a, b) = if n <= m { (small, large) } else { (large, small) };
    let picked = sample(rng, b.len(), a.len()).into_vec();
    let w = w2_exact_capped(a, &b.select(&picked), cap)?;
    Ok(w * w)
}
