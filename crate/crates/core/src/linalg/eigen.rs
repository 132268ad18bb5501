//! Smallest eigenpairs of symmetric positive semidefinite matrices.
//!
//! Two routes: a dense Householder tridiagonalisation followed by implicit
//! QL sweeps (every eigenpair, O(n³)), and a thick-restarted block Krylov
//! iteration that only touches the matrix through products and costs
//! O(n²·b) per restart for a basis of b vectors. The Krylov route accepts a
//! warm start, which is how the solver keeps the embedding update cheap
//! from one outer iteration to the next.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenMethod {
    /// Dense below `dense_threshold` rows, Krylov above.
    Auto,
    Dense,
    Krylov,
}

#[derive(Debug, Clone)]
pub struct EigenOptions {
    pub method: EigenMethod,
    pub dense_threshold: usize,
    pub max_restarts: usize,
    /// Seed for the random vectors that pad the Krylov start block.
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            method: EigenMethod::Auto,
            dense_threshold: 256,
            max_restarts: 400,
            seed: 0x5eed,
        }
    }
}

/// Ascending eigenvalues with their eigenvectors stored as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairs<T> {
    pub values: Array1<T>,
    pub vectors: Array2<T>,
}

/// The `c` smallest eigenpairs of a symmetric matrix, default options.
pub fn smallest_eigenpairs<T: Scalar>(l: ArrayView2<T>, c: usize) -> Result<EigenPairs<T>> {
    smallest_eigenpairs_with(l, c, &EigenOptions::default(), None)
}

/// The `c` smallest eigenpairs of a symmetric matrix.
///
/// `warm` may hold approximate eigenvectors as columns; only the Krylov
/// route uses it. Every result is checked against the residual bound
/// `‖L f − θ f‖ ≤ 1e-8 · max(1, θ_max)` (relaxed to a few ulps of `‖L‖`
/// for single precision) and rejected with [`Error::EigenNotConverged`]
/// otherwise.
pub fn smallest_eigenpairs_with<T: Scalar>(
    l: ArrayView2<T>,
    c: usize,
    opts: &EigenOptions,
    warm: Option<ArrayView2<T>>,
) -> Result<EigenPairs<T>> {
    solve(l, c, c, opts, warm)
}

/// The `c` smallest eigenpairs under the residual contract, plus the
/// `(c+1)`-th eigenvalue when it exists. That extra value is a Ritz value
/// and only carries eigenvalue accuracy, which is quadratic in its
/// residual.
pub(crate) fn smallest_eigenpairs_and_next<T: Scalar>(
    l: ArrayView2<T>,
    c: usize,
    opts: &EigenOptions,
    warm: Option<ArrayView2<T>>,
) -> Result<(EigenPairs<T>, Option<T>)> {
    let n = l.nrows();
    let want = (c + 1).min(n.max(1));
    let pairs = solve(l, want, c, opts, warm)?;
    if want == c {
        return Ok((pairs, None));
    }
    let next = pairs.values[c];
    Ok((
        EigenPairs {
            values: pairs.values.slice(s![..c]).to_owned(),
            vectors: pairs.vectors.slice(s![.., ..c]).to_owned(),
        },
        Some(next),
    ))
}

// computes `want` pairs, of which the first `need` must meet the contract
fn solve<T: Scalar>(
    l: ArrayView2<T>,
    want: usize,
    need: usize,
    opts: &EigenOptions,
    warm: Option<ArrayView2<T>>,
) -> Result<EigenPairs<T>> {
    let n = l.nrows();
    if l.ncols() != n {
        return Err(Error::Dimension(format!(
            "matrix must be square, got {}x{}",
            n,
            l.ncols()
        )));
    }
    if need < 1 || need > n || want < need || want > n {
        return Err(Error::Config(format!(
            "eigenpair count {need} out of range [1, {n}]"
        )));
    }
    check_symmetric(l)?;
    let norm = inf_norm(l);

    let use_dense = match opts.method {
        EigenMethod::Dense => true,
        EigenMethod::Krylov => false,
        EigenMethod::Auto => n <= opts.dense_threshold,
    };

    let mut pairs = if use_dense {
        dense_pairs(l, want)
    } else {
        match krylov(l, want, need, opts, warm, norm) {
            Some(p) => p,
            None => {
                log::warn!("block Krylov eigensolver stalled at n = {n}; using the dense route");
                dense_pairs(l, want)
            }
        }
    };

    let (mut worst, mut tolerance) = residual_report(l, &pairs, need, norm);
    if worst > tolerance && !use_dense {
        log::warn!(
            "block Krylov result failed the residual check at n = {n}; using the dense route"
        );
        pairs = dense_pairs(l, want);
        (worst, tolerance) = residual_report(l, &pairs, need, norm);
    }
    if worst > tolerance {
        return Err(Error::EigenNotConverged {
            residual: worst.as_f64(),
            tolerance: tolerance.as_f64(),
        });
    }
    Ok(pairs)
}

fn check_symmetric<T: Scalar>(l: ArrayView2<T>) -> Result<()> {
    let n = l.nrows();
    let scale = T::one().max(l.iter().fold(T::zero(), |m, v| m.max(v.abs())));
    let tol = T::lit(1e-10) * scale;
    for i in 0..n {
        for j in (i + 1)..n {
            if !l[[i, j]].is_finite() || (l[[i, j]] - l[[j, i]]).abs() > tol {
                return Err(Error::Validation(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

fn inf_norm<T: Scalar>(l: ArrayView2<T>) -> T {
    l.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<T>())
        .fold(T::zero(), T::max)
}

fn acceptance_tolerance<T: Scalar>(theta_max: T, norm: T) -> T {
    let contract = T::lit(1e-8) * T::one().max(theta_max);
    let floor = T::lit(64.0) * T::epsilon() * norm;
    contract.max(floor)
}

fn residual_report<T: Scalar>(
    l: ArrayView2<T>,
    pairs: &EigenPairs<T>,
    need: usize,
    norm: T,
) -> (T, T) {
    let f = pairs.vectors.slice(s![.., ..need]);
    let lf = l.dot(&f);
    let mut worst = T::zero();
    for (j, col) in lf.axis_iter(Axis(1)).enumerate() {
        let theta = pairs.values[j];
        let r = col
            .iter()
            .zip(f.column(j))
            .map(|(&a, &f)| (a - theta * f) * (a - theta * f))
            .sum::<T>()
            .sqrt();
        worst = worst.max(r);
    }
    let theta_max = pairs
        .values
        .iter()
        .take(need)
        .fold(T::zero(), |m, &v| m.max(v));
    (worst, acceptance_tolerance(theta_max, norm))
}

fn dense_pairs<T: Scalar>(l: ArrayView2<T>, c: usize) -> EigenPairs<T> {
    let (values, vectors) = symmetric_eigen_dense(l);
    EigenPairs {
        values: values.slice(s![..c]).to_owned(),
        vectors: vectors.slice(s![.., ..c]).to_owned(),
    }
}

/// Full eigendecomposition of a symmetric matrix; eigenvalues ascending,
/// eigenvectors as columns.
pub(crate) fn symmetric_eigen_dense<T: Scalar>(a: ArrayView2<T>) -> (Array1<T>, Array2<T>) {
    let n = a.nrows();
    if n == 0 {
        return (Array1::zeros(0), Array2::zeros((0, 0)));
    }
    let mut v: Vec<T> = a.iter().copied().collect();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tridiagonalize(n, &mut v, &mut d, &mut e);

    // rows of `vt` are eigenvector candidates, so QL rotations touch
    // contiguous memory
    let mut vt = vec![T::zero(); n * n];
    for i in 0..n {
        for k in 0..n {
            vt[i * n + k] = v[k * n + i];
        }
    }
    tridiagonal_ql(n, &mut d, &mut e, &mut vt);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).unwrap_or(std::cmp::Ordering::Equal));
    let values = Array1::from_iter(order.iter().map(|&i| d[i]));
    let mut vectors = Array2::zeros((n, n));
    for (col, &i) in order.iter().enumerate() {
        for k in 0..n {
            vectors[[k, col]] = vt[i * n + k];
        }
    }
    (values, vectors)
}

// Householder reduction to tridiagonal form (EISPACK tred2). On exit `v`
// holds the accumulated orthogonal transform, `d` the diagonal and `e` the
// subdiagonal in e[1..n].
fn tridiagonalize<T: Scalar>(n: usize, v: &mut [T], d: &mut [T], e: &mut [T]) {
    let idx = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = T::zero();
                v[idx(j, i)] = T::zero();
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = T::zero();
            }
            for j in 0..i {
                f = d[j];
                v[idx(j, i)] = f;
                g = e[j] + v[idx(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[idx(k, j)] * d[k];
                    e[k] += v[idx(k, j)] * f;
                }
                e[j] = g;
            }
            f = T::zero();
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    let upd = f * e[k] + g * d[k];
                    v[idx(k, j)] -= upd;
                }
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = T::zero();
            }
        }
        d[i] = h;
    }

    for i in 0..n - 1 {
        v[idx(n - 1, i)] = v[idx(i, i)];
        v[idx(i, i)] = T::one();
        let h = d[i + 1];
        if h != T::zero() {
            for k in 0..=i {
                d[k] = v[idx(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = T::zero();
                for k in 0..=i {
                    g += v[idx(k, i + 1)] * v[idx(k, j)];
                }
                for k in 0..=i {
                    let upd = g * d[k];
                    v[idx(k, j)] -= upd;
                }
            }
        }
        for k in 0..=i {
            v[idx(k, i + 1)] = T::zero();
        }
    }
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
        v[idx(n - 1, j)] = T::zero();
    }
    v[idx(n - 1, n - 1)] = T::one();
    e[0] = T::zero();
}

// Implicit QL on the tridiagonal (d, e) (EISPACK tql2). `vt` is stored
// transposed: row i is the i-th basis vector.
fn tridiagonal_ql<T: Scalar>(n: usize, d: &mut [T], e: &mut [T], vt: &mut [T]) {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();

    let mut f = T::zero();
    let mut tst1 = T::zero();
    let eps = T::epsilon();
    let two = T::lit(2.0);
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = vt.split_at_mut((i + 1) * n);
                    let row_i = &mut lo[i * n..];
                    let row_i1 = &mut hi[..n];
                    for k in 0..n {
                        let hk = row_i1[k];
                        row_i1[k] = s * row_i[k] + c * hk;
                        row_i[k] = c * row_i[k] - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 || iter >= 60 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = T::zero();
    }
}

/// Thick-restarted block Krylov iteration for the `c` smallest eigenpairs.
/// Returns `None` when the restart budget runs out before convergence.
const STALL_RESTARTS: usize = 8;

fn krylov<T: Scalar>(
    l: ArrayView2<T>,
    c: usize,
    need: usize,
    opts: &EigenOptions,
    warm: Option<ArrayView2<T>>,
    norm: T,
) -> Option<EigenPairs<T>> {
    let n = l.nrows();
    let block = (c + 3).min(n);
    let cap = (4 * block).max(64).min(n);
    let keep = (2 * block).min(cap);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    // basis vectors and their images under L, one per row
    let mut q = Array2::<T>::zeros((cap, n));
    let mut aq = Array2::<T>::zeros((cap, n));

    let mut len = 0;
    if let Some(w) = warm.filter(|w| w.nrows() == n) {
        for col in w.axis_iter(Axis(1)).take(block) {
            if try_append(&mut q, len, col.to_vec()) {
                len += 1;
            }
        }
    }
    while len < block {
        if try_append(&mut q, len, random_vec(&mut rng, n)) {
            len += 1;
        }
    }
    apply(l, &q, &mut aq, 0, len);
    let mut block_start = 0;
    let mut block_end = len;

    let target = T::lit(0.1) * acceptance_tolerance(T::one(), norm);
    let mut best: Option<(T, EigenPairs<T>)> = None;
    let mut stalled = 0;

    for _ in 0..opts.max_restarts {
        // expand until the basis is full
        while len < cap {
            let start = len;
            for r in block_start..block_end {
                if len >= cap {
                    break;
                }
                let cand = aq.row(r).to_vec();
                if try_append(&mut q, len, cand) {
                    len += 1;
                }
            }
            if len == start {
                // Krylov space exhausted; inject fresh directions
                let mut tries = 0;
                while len < cap.min(start + block) && tries < 4 * block {
                    if try_append(&mut q, len, random_vec(&mut rng, n)) {
                        len += 1;
                    }
                    tries += 1;
                }
                if len == start {
                    break;
                }
            }
            apply(l, &q, &mut aq, start, len);
            block_start = start;
            block_end = len;
        }

        // Rayleigh-Ritz on the current basis
        let qv = q.slice(s![..len, ..]);
        let aqv = aq.slice(s![..len, ..]);
        let mut h = qv.dot(&aqv.t());
        for i in 0..len {
            for j in (i + 1)..len {
                let avg = (h[[i, j]] + h[[j, i]]) * T::lit(0.5);
                h[[i, j]] = avg;
                h[[j, i]] = avg;
            }
        }
        let (theta, z) = symmetric_eigen_dense(h.view());
        let kept = keep.min(len);
        let zk = z.slice(s![.., ..kept]);
        let y = zk.t().dot(&qv);
        let ay = zk.t().dot(&aqv);

        let mut worst = T::zero();
        for j in 0..need {
            let r = y
                .row(j)
                .iter()
                .zip(ay.row(j))
                .map(|(&yv, &av)| (av - theta[j] * yv) * (av - theta[j] * yv))
                .sum::<T>()
                .sqrt();
            worst = worst.max(r);
        }
        let candidate = EigenPairs {
            values: theta.slice(s![..c]).to_owned(),
            vectors: y.slice(s![..c, ..]).t().to_owned(),
        };
        if worst <= target {
            return Some(candidate);
        }
        match &best {
            Some((b, _)) if worst >= T::lit(0.9) * *b => stalled += 1,
            _ => stalled = 0,
        }
        if best.as_ref().is_none_or(|(b, _)| worst < *b) {
            best = Some((worst, candidate));
        }
        if stalled >= STALL_RESTARTS
            && best
                .as_ref()
                .is_some_and(|(b, _)| *b <= acceptance_tolerance(T::one(), norm))
        {
            break;
        }

        // thick restart from the kept Ritz vectors
        q.slice_mut(s![..kept, ..]).assign(&y);
        aq.slice_mut(s![..kept, ..]).assign(&ay);
        len = kept;
        block_start = 0;
        block_end = block.min(kept);
        if cap == n && len == n {
            // the basis already spans the whole space
            break;
        }
    }

    best.and_then(|(worst, pairs)| {
        let theta_max = pairs
            .values
            .iter()
            .take(need)
            .fold(T::zero(), |m, &v| m.max(v));
        (worst <= acceptance_tolerance(theta_max, norm)).then_some(pairs)
    })
}

fn random_vec<T: Scalar>(rng: &mut ChaCha8Rng, n: usize) -> Vec<T> {
    (0..n)
        .map(|_| T::lit(rng.random_range(-1.0..1.0)))
        .collect()
}

fn apply<T: Scalar>(l: ArrayView2<T>, q: &Array2<T>, aq: &mut Array2<T>, from: usize, to: usize) {
    if to > from {
        // L is symmetric, so (L Qᵀ)ᵀ = Q L
        let prod = q.slice(s![from..to, ..]).dot(&l);
        aq.slice_mut(s![from..to, ..]).assign(&prod);
    }
}

/// Orthogonalises `v` against the first `len` rows of `q` (two passes of
/// classical Gram-Schmidt) and stores it at row `len` when it keeps enough
/// of its norm.
fn try_append<T: Scalar>(q: &mut Array2<T>, len: usize, v: Vec<T>) -> bool {
    let mut v = Array1::from(v);
    let original = v.dot(&v).sqrt();
    if original == T::zero() || !original.is_finite() {
        return false;
    }
    v.mapv_inplace(|x| x / original);
    if len > 0 {
        for _ in 0..2 {
            let basis = q.slice(s![..len, ..]);
            let coeff = basis.dot(&v);
            v -= &basis.t().dot(&coeff);
        }
    }
    let norm = v.dot(&v).sqrt();
    if norm <= T::lit(1e-6).max(T::lit(100.0) * T::epsilon()) {
        return false;
    }
    v.mapv_inplace(|x| x / norm);
    q.row_mut(len).assign(&v);
    true
}
