use crate::scalar::Scalar;

/// Euclidean projection of `v` onto the probability simplex
/// `{ s : s >= 0, sum(s) = 1 }`.
///
/// Uses the sort-and-threshold rule: sort descending, find the largest
/// prefix whose shifted entries stay positive, subtract the common shift.
///
/// # Panics
///
/// Panics if `v` is empty.
pub fn project_to_simplex<T: Scalar>(v: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); v.len()];
    let mut scratch = Vec::with_capacity(v.len());
    project_to_simplex_into(v, &mut out, &mut scratch);
    out
}

/// Allocation-free variant of [`project_to_simplex`]; `scratch` is reused
/// as sort space.
pub fn project_to_simplex_into<T: Scalar>(v: &[T], out: &mut [T], scratch: &mut Vec<T>) {
    assert!(
        !v.is_empty(),
        "cannot project an empty vector onto the simplex"
    );
    assert_eq!(v.len(), out.len());
    let tau = simplex_threshold(v, scratch);
    for (o, &x) in out.iter_mut().zip(v) {
        *o = (x - tau).max(T::zero());
    }
}

pub(crate) fn simplex_threshold<T: Scalar>(v: &[T], scratch: &mut Vec<T>) -> T {
    scratch.clear();
    scratch.extend_from_slice(v);
    scratch.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumsum = T::zero();
    let mut tau = T::zero();
    for (j, &u) in scratch.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - T::one()) / T::from_usize_lossy(j + 1);
        if u - t > T::zero() {
            tau = t;
        } else {
            break;
        }
    }
    tau
}
