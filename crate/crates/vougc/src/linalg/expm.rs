//! Matrix exponential by scaling-and-squaring with diagonal Pade
//! approximants (Higham 2005).

use super::require_square;
use crate::Result;
use nalgebra::DMatrix;

// theta_m bounds from Higham (2005), Table 2.3 (double precision).
const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.539398330063230e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068e0;
const THETA_13: f64 = 5.371920351148152e0;

fn one_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Pade coefficients b_0..b_m for the [m/m] approximant of exp.
fn pade_coeffs(m: usize) -> Vec<f64> {
    let mut b = vec![1.0; m + 1];
    // b_{i} = (2m - i)! m! / ((2m)! (m - i)! i!), computed by recurrence.
    for i in 1..=m {
        b[i] = b[i - 1] * ((m - i + 1) as f64) / (((2 * m - i + 1) * i) as f64);
    }
    b
}

/// Evaluate the [m/m] Pade approximant of e^A for m in {3,5,7,9}.
fn pade_low(a: &DMatrix<f64>, m: usize) -> DMatrix<f64> {
    let n = a.nrows();
    let b = pade_coeffs(m);
    let a2 = a * a;
    // U = A (sum b_{2k+1} A^{2k}), V = sum b_{2k} A^{2k}
    let mut even = DMatrix::identity(n, n) * b[0];
    let mut odd = DMatrix::identity(n, n) * b[1];
    let mut pow = DMatrix::identity(n, n);
    for k in 1..=(m / 2) {
        pow = &pow * &a2;
        even += &pow * b[2 * k];
        if 2 * k + 1 <= m {
            odd += &pow * b[2 * k + 1];
        }
    }
    let u = a * odd;
    solve_pade(&even, &u)
}

/// Evaluate the [13/13] Pade approximant using the Higham factorization.
fn pade13(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let b = pade_coeffs(13);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let id = DMatrix::<f64>::identity(n, n);
    let u = a * (&a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &id * b[1]);
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &id * b[0];
    solve_pade(&v, &u)
}

/// (V - U)^{-1} (V + U).
fn solve_pade(v: &DMatrix<f64>, u: &DMatrix<f64>) -> DMatrix<f64> {
    let lhs = v - u;
    let rhs = v + u;
    lhs.lu().solve(&rhs).expect("Pade denominator singular")
}

/// e^{Mt} by scaling-and-squaring with Pade approximation.
pub fn expm(m: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    require_square(m)?;
    let a = m * t;
    let norm = one_norm(&a);
    if norm <= THETA_3 {
        return Ok(pade_low(&a, 3));
    }
    if norm <= THETA_5 {
        return Ok(pade_low(&a, 5));
    }
    if norm <= THETA_7 {
        return Ok(pade_low(&a, 7));
    }
    if norm <= THETA_9 {
        return Ok(pade_low(&a, 9));
    }
    let s = ((norm / THETA_13).log2().ceil().max(0.0)) as u32;
    let scaled = &a / 2f64.powi(s as i32);
    let mut f = pade13(&scaled);
    for _ in 0..s {
        f = &f * &f;
    }
    Ok(f)
}
