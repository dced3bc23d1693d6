/// `E p⁽ᵏ⁾(Z)` for `Z ~ N(0, v)` and the polynomial `p(x) = Σ cⱼ xʲ`.
///
/// The derivative is taken on the coefficients and the Gaussian moments
/// `E Zʲ = (j−1)!! v^{j/2}` (zero for odd `j`) are applied term by term.
pub fn gaussian_poly_moment(coeffs: &[f64], k: usize, v: f64) -> f64 {
    let mut c = coeffs.to_vec();
    for _ in 0..k {
        if c.is_empty() {
            break;
        }
        c = c.iter().enumerate().skip(1).map(|(j, cj)| j as f64 * cj).collect();
    }
    c.iter()
        .enumerate()
        .filter(|(j, _)| j % 2 == 0)
        .map(|(j, cj)| cj * double_factorial(j as i64 - 1) * v.powi(j as i32 / 2))
        .sum()
}

fn double_factorial(n: i64) -> f64 {
    let mut acc = 1.0;
    let mut i = n;
    while i > 1 {
        acc *= i as f64;
        i -= 2;
    }
    acc
}
