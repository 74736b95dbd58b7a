//! Difference operators D² (second order) and D_L (L-step forward), applied matrix-free.

/// (D² r)_i = r_i − 2 r_{i+1} + r_{i+2}, length n − 2.
pub fn second_diff(r: &[f64]) -> Vec<f64> {
    r.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).collect()
}

/// D²ᵀ y, length `n`.
pub fn second_diff_t(y: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (i, v) in y.iter().enumerate() {
        out[i] += v;
        out[i + 1] -= 2.0 * v;
        out[i + 2] += v;
    }
    out
}

/// (D_L r)_i = r_i − r_{i+L}, length n − L.
pub fn lag_diff(r: &[f64], lag: usize) -> Vec<f64> {
    r.iter().zip(&r[lag..]).map(|(a, b)| a - b).collect()
}

/// D_Lᵀ z, length `n`.
pub fn lag_diff_t(z: &[f64], lag: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (i, v) in z.iter().enumerate() {
        out[i] += v;
        out[i + lag] -= v;
    }
    out
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    // ⟨D x, y⟩ = ⟨x, Dᵀ y⟩ on a fixed pair
    #[test]
    fn transposes_are_adjoint() {
        let x: Vec<f64> = (0..9).map(|i| (i as f64 * 0.7).sin()).collect();
        let y: Vec<f64> = (0..7).map(|i| (i as f64 * 1.3).cos()).collect();
        let lhs: f64 = second_diff(&x).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&second_diff_t(&y, 9)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);

        let z: Vec<f64> = (0..6).map(|i| i as f64 - 2.5).collect();
        let lhs: f64 = lag_diff(&x, 3).iter().zip(&z).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&lag_diff_t(&z, 3, 9)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn differences_annihilate_constants() {
        let c = vec![4.2; 10];
        assert!(second_diff(&c).iter().all(|v| *v == 0.0));
        assert!(lag_diff(&c, 4).iter().all(|v| *v == 0.0));
    }
}
