//! Hyperelastic constitutive evaluation in convective coordinates.
//!
//! Input are the covariant metrics `g_ij` (current) and `G_ij` (initial);
//! output are the contravariant second Piola-Kirchhoff components and the
//! Lagrangian elasticity tensor, both in Voigt form compatible with the
//! strain ordering `[E11,E22,E33,2E12,2E13,2E23]`.

use nalgebra::{Matrix3, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Voigt index pairs in the order used throughout the crate.
pub const VOIGT: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterialKind {
    NeoHookean,
    StVenantKirchhoff,
}

/// Isotropic hyperelastic model parameterized by Young's modulus and
/// Poisson's ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialModel {
    pub kind: MaterialKind,
    pub e: f64,
    pub nu: f64,
}

/// Stress and tangent at a material point.
#[derive(Debug, Clone)]
pub struct StressState {
    /// `[S11, S22, S33, S12, S13, S23]`, contravariant components.
    pub s: SVector<f64, 6>,
    /// Symmetric 6x6 tangent mapping Voigt strain increments to stress.
    pub c: SMatrix<f64, 6, 6>,
}

impl MaterialModel {
    pub fn new(kind: MaterialKind, e: f64, nu: f64) -> Result<Self> {
        if !(e > 0.0) {
            return Err(Error::Config(format!("Young's modulus must be positive, got {e}")));
        }
        if !(-1.0 < nu && nu < 0.5) {
            return Err(Error::Config(format!("Poisson ratio must lie in (-1, 0.5), got {nu}")));
        }
        Ok(MaterialModel { kind, e, nu })
    }

    /// Lamé constants `(λ, μ)`.
    pub fn lame(&self) -> (f64, f64) {
        let lambda = self.e * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu));
        let mu = self.e / (2.0 * (1.0 + self.nu));
        (lambda, mu)
    }

    /// Second Piola-Kirchhoff stress and Lagrangian tangent.
    pub fn evaluate(&self, g_cov: &Matrix3<f64>, big_g_cov: &Matrix3<f64>) -> Result<StressState> {
        let (lambda, mu) = self.lame();
        let det_g = g_cov.determinant();
        let det_big = big_g_cov.determinant();
        if det_g <= 0.0 {
            return Err(Error::InvertedElement {
                det: det_g,
                zeta1: 0.0,
                zeta2: 0.0,
                xi1: 0.0,
            });
        }
        let g_con = big_g_cov
            .try_inverse()
            .ok_or_else(|| Error::Geometry("singular initial metric".into()))?;
        match self.kind {
            MaterialKind::NeoHookean => {
                let c_inv = g_cov
                    .try_inverse()
                    .ok_or_else(|| Error::Geometry("singular current metric".into()))?;
                let ln_j = 0.5 * (det_g / det_big).ln();
                let mut s = SVector::<f64, 6>::zeros();
                for (a, &(i, j)) in VOIGT.iter().enumerate() {
                    s[a] = mu * (g_con[(i, j)] - c_inv[(i, j)]) + lambda * ln_j * c_inv[(i, j)];
                }
                let mut c = SMatrix::<f64, 6, 6>::zeros();
                let coef = mu - lambda * ln_j;
                for (a, &(i, j)) in VOIGT.iter().enumerate() {
                    for (b, &(k, l)) in VOIGT.iter().enumerate() {
                        c[(a, b)] = lambda * c_inv[(i, j)] * c_inv[(k, l)]
                            + coef
                                * (c_inv[(i, k)] * c_inv[(j, l)] + c_inv[(i, l)] * c_inv[(j, k)]);
                    }
                }
                Ok(StressState { s, c })
            }
            MaterialKind::StVenantKirchhoff => {
                let c = stvk_tangent(lambda, mu, &g_con);
                let e = crate::kinematics::green_lagrange_voigt(g_cov, big_g_cov);
                Ok(StressState { s: c * e, c })
            }
        }
    }

    /// Strain energy density per unit undeformed volume.
    pub fn energy(&self, g_cov: &Matrix3<f64>, big_g_cov: &Matrix3<f64>) -> Result<f64> {
        let (lambda, mu) = self.lame();
        let det_g = g_cov.determinant();
        let det_big = big_g_cov.determinant();
        if det_g <= 0.0 {
            return Err(Error::InvertedElement {
                det: det_g,
                zeta1: 0.0,
                zeta2: 0.0,
                xi1: 0.0,
            });
        }
        let g_con = big_g_cov
            .try_inverse()
            .ok_or_else(|| Error::Geometry("singular initial metric".into()))?;
        match self.kind {
            MaterialKind::NeoHookean => {
                let ln_j = 0.5 * (det_g / det_big).ln();
                // tr(G⁻¹ C) with C_ij = g_ij
                let tr = (g_con * g_cov).trace();
                Ok(0.5 * mu * (tr - 3.0) - mu * ln_j + 0.5 * lambda * ln_j * ln_j)
            }
            MaterialKind::StVenantKirchhoff => {
                let c = stvk_tangent(lambda, mu, &g_con);
                let e = crate::kinematics::green_lagrange_voigt(g_cov, big_g_cov);
                Ok(0.5 * e.dot(&(c * e)))
            }
        }
    }
}

fn stvk_tangent(lambda: f64, mu: f64, g_con: &Matrix3<f64>) -> SMatrix<f64, 6, 6> {
    let mut c = SMatrix::<f64, 6, 6>::zeros();
    for (a, &(i, j)) in VOIGT.iter().enumerate() {
        for (b, &(k, l)) in VOIGT.iter().enumerate() {
            c[(a, b)] = lambda * g_con[(i, j)] * g_con[(k, l)]
                + mu * (g_con[(i, k)] * g_con[(j, l)] + g_con[(i, l)] * g_con[(j, k)]);
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};

    fn models() -> [MaterialModel; 2] {
        [
            MaterialModel::new(MaterialKind::NeoHookean, 1.2e7, 0.25).unwrap(),
            MaterialModel::new(MaterialKind::StVenantKirchhoff, 1.2e7, 0.25).unwrap(),
        ]
    }

    #[test]
    fn stress_free_reference() {
        let id = Matrix3::identity();
        for m in models() {
            let st = m.evaluate(&id, &id).unwrap();
            assert_relative_eq!(st.s.norm(), 0.0, epsilon = 1e-9);
            // tangent symmetric
            assert_relative_eq!((st.c - st.c.transpose()).norm(), 0.0, epsilon = 1e-9);
        }
        // non-Cartesian reference metric is also stress free
        let g1 = Vector3::new(1.0, 0.2, 0.0);
        let g2 = Vector3::new(-0.1, 0.9, 0.1);
        let g3 = Vector3::new(0.0, 0.3, 1.4);
        let g = crate::kinematics::metric(&g1, &g2, &g3);
        for m in models() {
            let st = m.evaluate(&g, &g).unwrap();
            assert!(st.s.norm() < 1e-9 * m.e, "S = {:?}", st.s);
        }
    }

    #[test]
    fn neo_hookean_tangent_at_identity_equals_stvk() {
        let id = Matrix3::identity();
        let nh = MaterialModel::new(MaterialKind::NeoHookean, 3.3e6, 0.3).unwrap();
        let sv = MaterialModel::new(MaterialKind::StVenantKirchhoff, 3.3e6, 0.3).unwrap();
        let a = nh.evaluate(&id, &id).unwrap().c;
        let b = sv.evaluate(&id, &id).unwrap().c;
        for i in 0..6 {
            for j in 0..6 {
                assert_relative_eq!(a[(i, j)], b[(i, j)], epsilon = 1e-10 * nh.e);
            }
        }
    }

    #[test]
    fn stvk_uniaxial_strain_closed_form() {
        let m = MaterialModel::new(MaterialKind::StVenantKirchhoff, 2.0e7, 0.25).unwrap();
        let (lambda, mu) = m.lame();
        let e33 = 0.013;
        // metric with E33 = e33, all other strain components zero
        let mut g = Matrix3::identity();
        g[(2, 2)] = 1.0 + 2.0 * e33;
        let st = m.evaluate(&g, &Matrix3::identity()).unwrap();
        assert_relative_eq!(st.s[2], (lambda + 2.0 * mu) * e33, max_relative = 1e-12);
        assert_relative_eq!(st.s[0], lambda * e33, max_relative = 1e-12);
        assert_relative_eq!(st.s[1], lambda * e33, max_relative = 1e-12);
        assert_relative_eq!(st.s[3].abs() + st.s[4].abs() + st.s[5].abs(), 0.0, epsilon = 1e-12);
    }

    /// Random metric pair with controlled distortion and J > 0.3.
    fn random_state(rng: &mut impl Rng) -> (Matrix3<f64>, Matrix3<f64>) {
        loop {
            let mut f = Matrix3::<f64>::identity();
            for v in f.iter_mut() {
                *v += 0.25 * rng.gen_range(-1.0..1.0);
            }
            let g: Matrix3<f64> = f.transpose() * f;
            let big = Matrix3::identity();
            if g.determinant().sqrt() > 0.3 {
                return (g, big);
            }
        }
    }

    #[test]
    fn tangent_is_derivative_of_stress() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for m in models() {
            for _ in 0..100 {
                let (g, big) = random_state(&mut rng);
                let st = m.evaluate(&g, &big).unwrap();
                // perturb E_kl via g_kl = G_kl + 2 E_kl
                let h = 1e-6;
                for (b, &(k, l)) in VOIGT.iter().enumerate() {
                    let mut gp = g;
                    let mut gm = g;
                    let d = if k == l { 2.0 * h } else { h };
                    gp[(k, l)] += d;
                    gp[(l, k)] = gp[(k, l)];
                    gm[(k, l)] -= d;
                    gm[(l, k)] = gm[(k, l)];
                    let sp = m.evaluate(&gp, &big).unwrap().s;
                    let sm = m.evaluate(&gm, &big).unwrap().s;
                    let fd = (sp - sm) / (2.0 * h);
                    for a in 0..6 {
                        let scale = st.c.abs().max().max(m.e);
                        assert_relative_eq!(
                            st.c[(a, b)],
                            fd[a],
                            epsilon = 2e-5 * scale,
                            max_relative = 2e-5
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn stress_is_derivative_of_energy() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(22);
        for m in models() {
            for _ in 0..100 {
                let (g, big) = random_state(&mut rng);
                let st = m.evaluate(&g, &big).unwrap();
                let h = 1e-6;
                for (a, &(i, j)) in VOIGT.iter().enumerate() {
                    let mut gp = g;
                    let mut gm = g;
                    let d = if i == j { 2.0 * h } else { h };
                    gp[(i, j)] += d;
                    gp[(j, i)] = gp[(i, j)];
                    gm[(i, j)] -= d;
                    gm[(j, i)] = gm[(i, j)];
                    let fd =
                        (m.energy(&gp, &big).unwrap() - m.energy(&gm, &big).unwrap()) / (2.0 * h);
                    assert_relative_eq!(st.s[a], fd, epsilon = 2e-5 * m.e, max_relative = 2e-5);
                }
            }
        }
    }

    #[test]
    fn rigid_rotation_leaves_stress_unchanged() {
        // g_ij is rotation invariant, so identical metrics must give
        // bitwise identical output
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for m in models() {
            let (g, big) = random_state(&mut rng);
            let a = m.evaluate(&g, &big).unwrap();
            let b = m.evaluate(&g.clone(), &big.clone()).unwrap();
            assert_eq!(a.s, b.s);
            assert_eq!(a.c, b.c);
        }
    }

    #[test]
    fn inverted_metric_is_error() {
        let m = models()[0];
        let mut g = Matrix3::identity();
        g[(2, 2)] = -1.0;
        assert!(matches!(
            m.evaluate(&g, &Matrix3::identity()),
            Err(Error::InvertedElement { .. })
        ));
    }

    #[test]
    fn parameter_validation() {
        assert!(MaterialModel::new(MaterialKind::NeoHookean, -1.0, 0.3).is_err());
        assert!(MaterialModel::new(MaterialKind::NeoHookean, 1.0, 0.5).is_err());
        assert!(MaterialModel::new(MaterialKind::NeoHookean, 1.0, 0.49).is_ok());
    }
}
