//! Uniform cubic B-spline basis on the unit circle.
//!
//! With `m` equally spaced knot intervals on [0, 1) there are `m` basis
//! functions. Basis `k` peaks at the knot `k / m` and its support wraps
//! across the day boundary, so every function is C² on the circle and the
//! basis sums to one everywhere.

/// Nonzero basis values at a fractional position `u` in [0, 1).
///
/// Returns `(indices, values)` for the four active functions. When `m < 4`
/// the indices can repeat; callers must accumulate rather than assign.
#[inline]
pub fn active(u: f64, intervals: usize) -> ([usize; 4], [f64; 4]) {
    let m = intervals;
    let x = u * m as f64;
    let mut i = x.floor() as isize;
    let mut f = x - i as f64;
    if i >= m as isize {
        i = m as isize - 1;
        f = 1.0;
    } else if i < 0 {
        i = 0;
        f = 0.0;
    }
    let i = i as usize;
    let f2 = f * f;
    let f3 = f2 * f;
    let g = 1.0 - f;
    let values = [
        g * g * g / 6.0,
        (3.0 * f3 - 6.0 * f2 + 4.0) / 6.0,
        (-3.0 * f3 + 3.0 * f2 + 3.0 * f + 1.0) / 6.0,
        f3 / 6.0,
    ];
    let indices = [(i + m - 1) % m, i % m, (i + 1) % m, (i + 2) % m];
    (indices, values)
}

pub fn basis_into(u: f64, intervals: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let (idx, val) = active(u, intervals);
    for (k, v) in idx.iter().zip(val) {
        out[*k] += v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_of_unity() {
        for m in [4usize, 5, 6, 9] {
            let mut b = vec![0.0; m];
            for k in 0..1000 {
                let u = k as f64 / 1000.0;
                basis_into(u, m, &mut b);
                let s: f64 = b.iter().sum();
                assert!((s - 1.0).abs() < 1e-14, "m={m} u={u} sum={s}");
                assert!(b.iter().all(|v| *v >= 0.0));
            }
        }
    }

    #[test]
    fn continuous_across_midnight() {
        let m = 5;
        let mut lo = vec![0.0; m];
        let mut hi = vec![0.0; m];
        basis_into(0.0, m, &mut lo);
        basis_into(1.0 - 1e-12, m, &mut hi);
        for (a, b) in lo.iter().zip(&hi) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn peak_at_own_knot() {
        let m = 6;
        let mut b = vec![0.0; m];
        basis_into(2.0 / 6.0, m, &mut b);
        assert!((b[2] - 4.0 / 6.0).abs() < 1e-14);
        assert!((b[1] - 1.0 / 6.0).abs() < 1e-14);
        assert!((b[3] - 1.0 / 6.0).abs() < 1e-14);
    }
}
