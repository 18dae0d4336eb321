//! Gauss-Legendre rules and cross-section interior rules.

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// computed by Newton iteration on the Legendre polynomial.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev-based initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((x, w));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = pk;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss rule mapped to `[a, b]`.
pub fn gauss_on(a: f64, b: f64, n: usize) -> Vec<(f64, f64)> {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    gauss_legendre(n)
        .into_iter()
        .map(|(x, w)| (mid + half * x, half * w))
        .collect()
}

/// Interior quadrature `(zeta1, zeta2, weight)` for a rectangle `h x w`
/// centered at the origin (`zeta1` across the height).
pub fn rectangle_rule(h: f64, w: f64, n: usize) -> Vec<(f64, f64, f64)> {
    let g1 = gauss_on(-0.5 * h, 0.5 * h, n);
    let g2 = gauss_on(-0.5 * w, 0.5 * w, n);
    let mut out = Vec::with_capacity(n * n);
    for &(z1, w1) in &g1 {
        for &(z2, w2) in &g2 {
            out.push((z1, z2, w1 * w2));
        }
    }
    out
}

/// Polar-mapped interior quadrature for a disc of radius `r`:
/// Gauss in the radial direction, Gauss in the angle, weight `r dr dθ`.
pub fn disc_rule(r: f64, n_rad: usize, n_ang: usize) -> Vec<(f64, f64, f64)> {
    let gr = gauss_on(0.0, r, n_rad);
    let ga = gauss_on(0.0, std::f64::consts::TAU, n_ang);
    let mut out = Vec::with_capacity(n_rad * n_ang);
    for &(rho, wr) in &gr {
        for &(th, wa) in &ga {
            out.push((rho * th.cos(), rho * th.sin(), wr * wa * rho));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_integrates_polynomials_exactly() {
        for n in 1..=8 {
            let rule = gauss_legendre(n);
            for k in 0..2 * n {
                let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
                let got: f64 = rule.iter().map(|&(x, w)| w * x.powi(k as i32)).sum();
                assert_relative_eq!(got, exact, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn rectangle_and_disc_areas() {
        let a: f64 = rectangle_rule(0.2, 1.0, 4).iter().map(|p| p.2).sum();
        assert_relative_eq!(a, 0.2, epsilon = 1e-12);
        let a: f64 = disc_rule(0.25, 4, 8).iter().map(|p| p.2).sum();
        assert_relative_eq!(a, std::f64::consts::PI * 0.0625, epsilon = 1e-12);
    }

    #[test]
    fn disc_second_moments() {
        // ∫ zeta1^2 dA = π r^4 / 4
        let r = 2.0f64;
        let m: f64 = disc_rule(r, 6, 12).iter().map(|p| p.2 * p.0 * p.0).sum();
        assert_relative_eq!(m, std::f64::consts::PI * r.powi(4) / 4.0, epsilon = 1e-9);
    }
}
