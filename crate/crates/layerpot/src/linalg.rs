//! Small dense linear solves (fixed size, partial pivoting).

/// Solves `a x = b` for small `N` by LU with partial pivoting.
/// Returns `None` when the matrix is numerically singular.
pub fn solve<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    for col in 0..N {
        let mut piv = col;
        let mut best = a[col][col].abs();
        for r in col + 1..N {
            let v = a[r][col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best < 1e-300 {
            return None;
        }
        if piv != col {
            a.swap(piv, col);
            b.swap(piv, col);
        }
        let d = a[col][col];
        for r in col + 1..N {
            let f = a[r][col] / d;
            if f == 0.0 {
                continue;
            }
            for c in col + 1..N {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; N];
    for r in (0..N).rev() {
        let mut s = b[r];
        for c in r + 1..N {
            s -= a[r][c] * x[c];
        }
        x[r] = s / a[r][r];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_well_conditioned_system() {
        let a = [[4.0, 1.0, 0.0], [1.0, 3.0, -1.0], [0.0, -1.0, 2.0]];
        let xt = [1.0, -2.0, 0.5];
        let b = [
            a[0][0] * xt[0] + a[0][1] * xt[1] + a[0][2] * xt[2],
            a[1][0] * xt[0] + a[1][1] * xt[1] + a[1][2] * xt[2],
            a[2][0] * xt[0] + a[2][1] * xt[1] + a[2][2] * xt[2],
        ];
        let x = solve(a, b).unwrap();
        for i in 0..3 {
            assert!((x[i] - xt[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        let a = [[0.0, 1.0], [1.0, 0.0]];
        let x = solve(a, [2.0, 3.0]).unwrap();
        assert_eq!(x, [3.0, 2.0]);
    }

    #[test]
    fn reports_singularity() {
        let a = [[1.0, 2.0], [2.0, 4.0]];
        assert!(solve(a, [1.0, 2.0]).is_none());
    }
}
