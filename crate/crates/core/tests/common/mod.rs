//! Dense reference evolution: the full single-step unitary as a matrix.

use levywalk::{CoinAmplitudes, CoinOrder, Convention};
use num_complex::Complex64;

/// Basis index of `(x, c)` with `c = 0` for L and `c = 1` for R.
fn index(x: i64, c: usize, reach: i64) -> usize {
    2 * (x + reach) as usize + c
}

/// `S(l) (I ⊗ C)` on positions `[-reach, reach]`; amplitude shifted out of
/// the lattice is dropped, so callers keep `reach` large enough.
pub fn step_matrix(l: usize, reach: i64, convention: Convention) -> Vec<Vec<Complex64>> {
    let n = 2 * (2 * reach as usize + 1);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    // coin[out][in] in (L, R) component order
    let coin: [[f64; 2]; 2] = match convention.coin {
        CoinOrder::RightLeft => [[-h, h], [h, h]],
        CoinOrder::LeftRight => [[h, h], [h, -h]],
    };
    let (dl, dr) = if convention.mirrored { (l as i64, -(l as i64)) } else { (-(l as i64), l as i64) };

    let mut u = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for x in -reach..=reach {
        for cin in 0..2 {
            for cout in 0..2 {
                let to = x + if cout == 0 { dl } else { dr };
                if to.abs() <= reach {
                    u[index(to, cout, reach)][index(x, cin, reach)] += coin[cout][cin];
                }
            }
        }
    }
    u
}

pub fn initial(coin: CoinAmplitudes, reach: i64) -> Vec<Complex64> {
    let mut v = vec![Complex64::new(0.0, 0.0); 2 * (2 * reach as usize + 1)];
    v[index(0, 0, reach)] = Complex64::new(coin.b0(), 0.0);
    v[index(0, 1, reach)] = Complex64::new(coin.a0(), 0.0);
    v
}

pub fn apply(u: &[Vec<Complex64>], v: &[Complex64]) -> Vec<Complex64> {
    u.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// `(ψ_L(x), ψ_R(x))` of a dense state.
pub fn amplitude(v: &[Complex64], x: i64, reach: i64) -> (Complex64, Complex64) {
    (v[index(x, 0, reach)], v[index(x, 1, reach)])
}
