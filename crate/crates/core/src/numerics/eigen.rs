//! Dense eigensolver for real non-symmetric matrices.
//!
//! Householder reduction to upper Hessenberg form followed by Francis
//! double-shift QR iteration (real Schur form), then back-substitution for
//! the eigenvectors. Follows the EISPACK `orthes`/`hqr2` pair.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const DEFAULT_MAX_DIM: usize = 2000;

/// Eigenvalues of a real matrix with optional eigenvectors (column `i` pairs
/// with eigenvalue `i`, unit 2-norm).
#[derive(Debug, Clone)]
pub struct ComplexSpectrum {
    pub eigenvalues: Vec<Complex64>,
    pub eigenvectors: Option<Vec<Vec<Complex64>>>,
}

impl ComplexSpectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max_abs_imag(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |m, l| m.max(l.im.abs()))
    }

    pub fn has_complex_pair(&self, tol: f64) -> bool {
        self.eigenvalues.iter().any(|l| l.im.abs() > tol)
    }

    pub fn min_real(&self) -> f64 {
        self.eigenvalues.iter().fold(f64::INFINITY, |m, l| m.min(l.re))
    }

    /// Every non-real eigenvalue has its conjugate in the list.
    pub fn conjugate_pairs_ok(&self, tol: f64) -> bool {
        let mut used = vec![false; self.eigenvalues.len()];
        for (i, l) in self.eigenvalues.iter().enumerate() {
            if l.im.abs() <= tol || used[i] {
                continue;
            }
            let partner = self.eigenvalues.iter().enumerate().position(|(j, m)| {
                j != i && !used[j] && (m.re - l.re).abs() <= tol && (m.im + l.im).abs() <= tol
            });
            match partner {
                Some(j) => {
                    used[i] = true;
                    used[j] = true;
                }
                None => return false,
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EigOptions {
    pub vectors: bool,
    pub max_dim: usize,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self {
            vectors: true,
            max_dim: DEFAULT_MAX_DIM,
        }
    }
}

pub fn eig_dense(a: &Matrix) -> Result<ComplexSpectrum> {
    eig_dense_with(a, EigOptions::default())
}

pub fn eigenvalues(a: &Matrix) -> Result<ComplexSpectrum> {
    eig_dense_with(
        a,
        EigOptions {
            vectors: false,
            ..EigOptions::default()
        },
    )
}

pub fn eig_dense_with(a: &Matrix, opts: EigOptions) -> Result<ComplexSpectrum> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::dim("eig_dense", a.shape(), a.shape()));
    }
    if n > opts.max_dim {
        return Err(Error::Config(format!("matrix of order {n} exceeds eigensolver cap {}", opts.max_dim)));
    }
    if !a.is_finite() {
        return Err(Error::Numerical("eig_dense input contains non-finite entries".into()));
    }
    if n == 0 {
        return Ok(ComplexSpectrum {
            eigenvalues: Vec::new(),
            eigenvectors: opts.vectors.then(Vec::new),
        });
    }

    let mut solver = Hqr::new(a.clone());
    solver.orthes();
    solver.hqr2(opts.vectors)?;

    let eigenvalues: Vec<Complex64> = (0..n).map(|i| Complex64::new(solver.d[i], solver.e[i])).collect();
    let eigenvectors = opts.vectors.then(|| solver.complex_vectors());
    Ok(ComplexSpectrum {
        eigenvalues,
        eigenvectors,
    })
}

struct Hqr {
    n: usize,
    h: Matrix,
    v: Matrix,
    d: Vec<f64>,
    e: Vec<f64>,
}

fn cdiv(xr: f64, xi: f64, yr: f64, yi: f64) -> (f64, f64) {
    if yr.abs() > yi.abs() {
        let r = yi / yr;
        let d = yr + r * yi;
        ((xr + r * xi) / d, (xi - r * xr) / d)
    } else {
        let r = yr / yi;
        let d = yi + r * yr;
        ((r * xr + xi) / d, (r * xi - xr) / d)
    }
}

impl Hqr {
    fn new(h: Matrix) -> Self {
        let n = h.rows();
        Self {
            n,
            h,
            v: Matrix::identity(n),
            d: vec![0.0; n],
            e: vec![0.0; n],
        }
    }

    /// Householder reduction to Hessenberg form, accumulating the
    /// orthogonal similarity into `v`.
    fn orthes(&mut self) {
        let n = self.n;
        if n < 3 {
            return;
        }
        let high = n - 1;
        let h = &mut self.h;
        let mut ort = vec![0.0; n];

        for m in 1..high {
            let scale: f64 = (m..=high).map(|i| h[(i, m - 1)].abs()).sum();
            if scale == 0.0 {
                continue;
            }
            let mut hh = 0.0;
            for i in (m..=high).rev() {
                ort[i] = h[(i, m - 1)] / scale;
                hh += ort[i] * ort[i];
            }
            let mut g = hh.sqrt();
            if ort[m] > 0.0 {
                g = -g;
            }
            hh -= ort[m] * g;
            ort[m] -= g;

            for j in m..n {
                let f = (m..=high).rev().map(|i| ort[i] * h[(i, j)]).sum::<f64>() / hh;
                for i in m..=high {
                    h[(i, j)] -= f * ort[i];
                }
            }
            for i in 0..=high {
                let f = (m..=high).rev().map(|j| ort[j] * h[(i, j)]).sum::<f64>() / hh;
                for j in m..=high {
                    h[(i, j)] -= f * ort[j];
                }
            }
            ort[m] *= scale;
            h[(m, m - 1)] = scale * g;
        }

        let v = &mut self.v;
        for m in (1..high).rev() {
            if h[(m, m - 1)] == 0.0 {
                continue;
            }
            for i in m + 1..=high {
                ort[i] = h[(i, m - 1)];
            }
            for j in m..=high {
                let mut g: f64 = (m..=high).map(|i| ort[i] * v[(i, j)]).sum();
                g = (g / ort[m]) / h[(m, m - 1)];
                for i in m..=high {
                    v[(i, j)] += g * ort[i];
                }
            }
        }
    }

    /// Real Schur form by shifted QR, then eigenvector back-substitution.
    fn hqr2(&mut self, vectors: bool) -> Result<()> {
        let nn = self.n as isize;
        let low: isize = 0;
        let high: isize = nn - 1;
        let eps = f64::EPSILON;
        let max_iterations = 100 * self.n;

        let h = &mut self.h;
        let v = &mut self.v;
        let d = &mut self.d;
        let e = &mut self.e;
        let at = |i: isize, j: isize| (i as usize, j as usize);

        let mut exshift = 0.0;
        let (mut p, mut q, mut r, mut s, mut z) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let (mut w, mut x, mut y);

        let mut norm = 0.0;
        for i in 0..nn {
            for j in (i - 1).max(0)..nn {
                norm += h[at(i, j)].abs();
            }
        }

        let mut n = nn - 1;
        let mut iter = 0usize;
        let mut total_iterations = 0usize;
        while n >= low {
            // Look for a single small subdiagonal element.
            let mut l = n;
            while l > low {
                s = h[at(l - 1, l - 1)].abs() + h[at(l, l)].abs();
                if s == 0.0 {
                    s = norm;
                }
                if h[at(l, l - 1)].abs() <= eps * s {
                    break;
                }
                l -= 1;
            }

            if l == n {
                // One root.
                h[at(n, n)] += exshift;
                d[n as usize] = h[at(n, n)];
                e[n as usize] = 0.0;
                n -= 1;
                iter = 0;
            } else if l == n - 1 {
                // Two roots.
                w = h[at(n, n - 1)] * h[at(n - 1, n)];
                p = (h[at(n - 1, n - 1)] - h[at(n, n)]) / 2.0;
                q = p * p + w;
                z = q.abs().sqrt();
                h[at(n, n)] += exshift;
                h[at(n - 1, n - 1)] += exshift;
                x = h[at(n, n)];

                if q >= 0.0 {
                    z = if p >= 0.0 { p + z } else { p - z };
                    d[(n - 1) as usize] = x + z;
                    d[n as usize] = d[(n - 1) as usize];
                    if z != 0.0 {
                        d[n as usize] = x - w / z;
                    }
                    e[(n - 1) as usize] = 0.0;
                    e[n as usize] = 0.0;
                    x = h[at(n, n - 1)];
                    s = x.abs() + z.abs();
                    p = x / s;
                    q = z / s;
                    r = (p * p + q * q).sqrt();
                    p /= r;
                    q /= r;

                    for j in n - 1..nn {
                        z = h[at(n - 1, j)];
                        h[at(n - 1, j)] = q * z + p * h[at(n, j)];
                        h[at(n, j)] = q * h[at(n, j)] - p * z;
                    }
                    for i in 0..=n {
                        z = h[at(i, n - 1)];
                        h[at(i, n - 1)] = q * z + p * h[at(i, n)];
                        h[at(i, n)] = q * h[at(i, n)] - p * z;
                    }
                    for i in low..=high {
                        z = v[at(i, n - 1)];
                        v[at(i, n - 1)] = q * z + p * v[at(i, n)];
                        v[at(i, n)] = q * v[at(i, n)] - p * z;
                    }
                } else {
                    d[(n - 1) as usize] = x + p;
                    d[n as usize] = x + p;
                    e[(n - 1) as usize] = z;
                    e[n as usize] = -z;
                }
                n -= 2;
                iter = 0;
            } else {
                total_iterations += 1;
                if total_iterations > max_iterations {
                    return Err(Error::Numerical(format!(
                        "QR iteration did not converge after {max_iterations} sweeps; active block rows {l}..={n}"
                    )));
                }

                x = h[at(n, n)];
                y = 0.0;
                w = 0.0;
                if l < n {
                    y = h[at(n - 1, n - 1)];
                    w = h[at(n, n - 1)] * h[at(n - 1, n)];
                }

                // Exceptional shifts break cycles.
                if iter == 10 {
                    exshift += x;
                    for i in low..=n {
                        h[at(i, i)] -= x;
                    }
                    s = h[at(n, n - 1)].abs() + h[at(n - 1, n - 2)].abs();
                    x = 0.75 * s;
                    y = x;
                    w = -0.4375 * s * s;
                }
                if iter == 30 {
                    s = (y - x) / 2.0;
                    s = s * s + w;
                    if s > 0.0 {
                        s = s.sqrt();
                        if y < x {
                            s = -s;
                        }
                        s = x - w / ((y - x) / 2.0 + s);
                        for i in low..=n {
                            h[at(i, i)] -= s;
                        }
                        exshift += s;
                        x = 0.964;
                        y = x;
                        w = x;
                    }
                }
                iter += 1;

                // Look for two consecutive small subdiagonal elements.
                let mut m = n - 2;
                while m >= l {
                    z = h[at(m, m)];
                    r = x - z;
                    s = y - z;
                    p = (r * s - w) / h[at(m + 1, m)] + h[at(m, m + 1)];
                    q = h[at(m + 1, m + 1)] - z - r - s;
                    r = h[at(m + 2, m + 1)];
                    s = p.abs() + q.abs() + r.abs();
                    p /= s;
                    q /= s;
                    r /= s;
                    if m == l {
                        break;
                    }
                    if h[at(m, m - 1)].abs() * (q.abs() + r.abs())
                        < eps * (p.abs() * (h[at(m - 1, m - 1)].abs() + z.abs() + h[at(m + 1, m + 1)].abs()))
                    {
                        break;
                    }
                    m -= 1;
                }

                for i in m + 2..=n {
                    h[at(i, i - 2)] = 0.0;
                    if i > m + 2 {
                        h[at(i, i - 3)] = 0.0;
                    }
                }

                // Double QR step on rows l..=n, columns m..=n.
                let mut k = m;
                while k < n {
                    let notlast = k != n - 1;
                    if k != m {
                        p = h[at(k, k - 1)];
                        q = h[at(k + 1, k - 1)];
                        r = if notlast { h[at(k + 2, k - 1)] } else { 0.0 };
                        x = p.abs() + q.abs() + r.abs();
                        if x == 0.0 {
                            k += 1;
                            continue;
                        }
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                    s = (p * p + q * q + r * r).sqrt();
                    if p < 0.0 {
                        s = -s;
                    }
                    if s != 0.0 {
                        if k != m {
                            h[at(k, k - 1)] = -s * x;
                        } else if l != m {
                            h[at(k, k - 1)] = -h[at(k, k - 1)];
                        }
                        p += s;
                        x = p / s;
                        y = q / s;
                        z = r / s;
                        q /= p;
                        r /= p;

                        for j in k..nn {
                            p = h[at(k, j)] + q * h[at(k + 1, j)];
                            if notlast {
                                p += r * h[at(k + 2, j)];
                                h[at(k + 2, j)] -= p * z;
                            }
                            h[at(k, j)] -= p * x;
                            h[at(k + 1, j)] -= p * y;
                        }
                        for i in 0..=n.min(k + 3) {
                            p = x * h[at(i, k)] + y * h[at(i, k + 1)];
                            if notlast {
                                p += z * h[at(i, k + 2)];
                                h[at(i, k + 2)] -= p * r;
                            }
                            h[at(i, k)] -= p;
                            h[at(i, k + 1)] -= p * q;
                        }
                        for i in low..=high {
                            p = x * v[at(i, k)] + y * v[at(i, k + 1)];
                            if notlast {
                                p += z * v[at(i, k + 2)];
                                v[at(i, k + 2)] -= p * r;
                            }
                            v[at(i, k)] -= p;
                            v[at(i, k + 1)] -= p * q;
                        }
                    }
                    k += 1;
                }
            }
        }

        if !vectors || norm == 0.0 {
            return Ok(());
        }

        // Back-substitute to find vectors of the upper triangular form.
        for n in (0..nn).rev() {
            p = d[n as usize];
            q = e[n as usize];

            if q == 0.0 {
                let mut l = n;
                h[at(n, n)] = 1.0;
                for i in (0..n).rev() {
                    w = h[at(i, i)] - p;
                    r = 0.0;
                    for j in l..=n {
                        r += h[at(i, j)] * h[at(j, n)];
                    }
                    if e[i as usize] < 0.0 {
                        z = w;
                        s = r;
                    } else {
                        l = i;
                        if e[i as usize] == 0.0 {
                            h[at(i, n)] = if w != 0.0 { -r / w } else { -r / (eps * norm) };
                        } else {
                            x = h[at(i, i + 1)];
                            y = h[at(i + 1, i)];
                            q = (d[i as usize] - p) * (d[i as usize] - p) + e[i as usize] * e[i as usize];
                            let t = (x * s - z * r) / q;
                            h[at(i, n)] = t;
                            h[at(i + 1, n)] = if x.abs() > z.abs() { (-r - w * t) / x } else { (-s - y * t) / z };
                        }
                        let t = h[at(i, n)].abs();
                        if (eps * t) * t > 1.0 {
                            for j in i..=n {
                                h[at(j, n)] /= t;
                            }
                        }
                    }
                }
            } else if q < 0.0 {
                let mut l = n - 1;
                if h[at(n, n - 1)].abs() > h[at(n - 1, n)].abs() {
                    h[at(n - 1, n - 1)] = q / h[at(n, n - 1)];
                    h[at(n - 1, n)] = -(h[at(n, n)] - p) / h[at(n, n - 1)];
                } else {
                    let (cr, ci) = cdiv(0.0, -h[at(n - 1, n)], h[at(n - 1, n - 1)] - p, q);
                    h[at(n - 1, n - 1)] = cr;
                    h[at(n - 1, n)] = ci;
                }
                h[at(n, n - 1)] = 0.0;
                h[at(n, n)] = 1.0;
                for i in (0..n - 1).rev() {
                    let mut ra = 0.0;
                    let mut sa = 0.0;
                    for j in l..=n {
                        ra += h[at(i, j)] * h[at(j, n - 1)];
                        sa += h[at(i, j)] * h[at(j, n)];
                    }
                    w = h[at(i, i)] - p;

                    if e[i as usize] < 0.0 {
                        z = w;
                        r = ra;
                        s = sa;
                    } else {
                        l = i;
                        if e[i as usize] == 0.0 {
                            let (cr, ci) = cdiv(-ra, -sa, w, q);
                            h[at(i, n - 1)] = cr;
                            h[at(i, n)] = ci;
                        } else {
                            x = h[at(i, i + 1)];
                            y = h[at(i + 1, i)];
                            let di = d[i as usize] - p;
                            let mut vr = di * di + e[i as usize] * e[i as usize] - q * q;
                            let vi = di * 2.0 * q;
                            if vr == 0.0 && vi == 0.0 {
                                vr = eps * norm * (w.abs() + q.abs() + x.abs() + y.abs() + z.abs());
                            }
                            let (cr, ci) = cdiv(x * r - z * ra + q * sa, x * s - z * sa - q * ra, vr, vi);
                            h[at(i, n - 1)] = cr;
                            h[at(i, n)] = ci;
                            if x.abs() > z.abs() + q.abs() {
                                h[at(i + 1, n - 1)] = (-ra - w * h[at(i, n - 1)] + q * h[at(i, n)]) / x;
                                h[at(i + 1, n)] = (-sa - w * h[at(i, n)] - q * h[at(i, n - 1)]) / x;
                            } else {
                                let (cr, ci) = cdiv(-r - y * h[at(i, n - 1)], -s - y * h[at(i, n)], z, q);
                                h[at(i + 1, n - 1)] = cr;
                                h[at(i + 1, n)] = ci;
                            }
                        }
                        let t = h[at(i, n - 1)].abs().max(h[at(i, n)].abs());
                        if (eps * t) * t > 1.0 {
                            for j in i..=n {
                                h[at(j, n - 1)] /= t;
                                h[at(j, n)] /= t;
                            }
                        }
                    }
                }
            }
        }

        // Back-transform to eigenvectors of the original matrix.
        for j in (low..nn).rev() {
            for i in low..=high {
                z = 0.0;
                for k in low..=j.min(high) {
                    z += v[at(i, k)] * h[at(k, j)];
                }
                v[at(i, j)] = z;
            }
        }
        Ok(())
    }

    /// Unpacks the real storage convention (pairs of columns hold real and
    /// imaginary parts) into unit-norm complex columns.
    fn complex_vectors(&self) -> Vec<Vec<Complex64>> {
        let n = self.n;
        let mut out = Vec::with_capacity(n);
        let mut j = 0;
        while j < n {
            if self.e[j] == 0.0 {
                let col: Vec<Complex64> = (0..n).map(|i| Complex64::new(self.v[(i, j)], 0.0)).collect();
                out.push(normalized(col));
                j += 1;
            } else {
                let col: Vec<Complex64> = (0..n)
                    .map(|i| Complex64::new(self.v[(i, j)], self.v[(i, j + 1)]))
                    .collect();
                let col = normalized(col);
                let conj = col.iter().map(|c| c.conj()).collect();
                out.push(col);
                out.push(conj);
                j += 2;
            }
        }
        out
    }
}

fn normalized(mut v: Vec<Complex64>) -> Vec<Complex64> {
    let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        for c in &mut v {
            *c /= norm;
        }
    }
    v
}

/// Largest `‖A·u − λu‖₂` over the returned eigenpairs.
pub fn max_residual(a: &Matrix, spectrum: &ComplexSpectrum) -> Option<f64> {
    let vectors = spectrum.eigenvectors.as_ref()?;
    let n = a.rows();
    let mut worst: f64 = 0.0;
    for (lambda, u) in spectrum.eigenvalues.iter().zip(vectors) {
        let mut res2 = 0.0;
        for i in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, uk) in u.iter().enumerate() {
                acc += uk * a[(i, k)];
            }
            res2 += (acc - lambda * u[i]).norm_sqr();
        }
        worst = worst.max(res2.sqrt());
    }
    Some(worst)
}

/// Induced 1-norm.
pub fn norm_one(a: &Matrix) -> f64 {
    (0..a.cols())
        .map(|j| (0..a.rows()).map(|i| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
