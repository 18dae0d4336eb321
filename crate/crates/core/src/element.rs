//! Isogeometric rod element integrals.
//!
//! Each nonzero knot span of a patch axis is one element carrying
//! `n_e = p + 1` basis functions with `n_cs` coefficients each. Internal
//! force and tangent integrate the constitutive response over the axis
//! Gauss rule times the cross-section interior rule; surface loads and
//! weak Dirichlet patches integrate over the boundary curve instead.

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, Vector3};

use crate::kinematics::{
    current_bases, metric, pi_apply, pi_spread, surface_frame, volume_jacobian, BoundaryPoint,
    PiEval, ProfileShape, RodPatch,
};
use crate::material::MaterialModel;
use crate::quadrature::gauss_on;
use crate::splines::{wrap_periodic, RationalBasis};
use crate::{Error, Result};

/// Cached quadrature data of one patch.
pub struct PatchContext {
    /// Per element: axis Gauss points `(ξ¹, weight)`, `p+1` per span.
    pub axis_rule: Vec<Vec<(f64, f64)>>,
    /// Cross-section interior points with cached monomials.
    pub interior: Vec<InteriorPoint>,
}

pub struct InteriorPoint {
    pub zeta1: f64,
    pub zeta2: f64,
    pub w: f64,
    pub pi: PiEval,
}

impl PatchContext {
    pub fn new(patch: &RodPatch) -> Self {
        let kv = patch.axis0.knot_vector();
        let n_gp = patch.axis0.degree() + 1;
        let axis_rule = (0..kv.n_spans())
            .map(|e| {
                let (a, b) = kv.span_interval(e);
                gauss_on(a, b, n_gp)
            })
            .collect();
        let interior = patch
            .profile
            .interior
            .iter()
            .map(|&(z1, z2, w)| InteriorPoint {
                zeta1: z1,
                zeta2: z2,
                w,
                pi: PiEval::new(patch.order, z1, z2),
            })
            .collect();
        PatchContext {
            axis_rule,
            interior,
        }
    }
}

/// Control indices of the basis functions with support in element `e`.
pub fn element_ctrls(patch: &RodPatch, e: usize) -> Vec<usize> {
    let kv = patch.axis0.knot_vector();
    let (a, b) = kv.span_interval(e);
    let basis = patch
        .basis_at(0.5 * (a + b), 0)
        .expect("span midpoint is in the domain");
    (0..basis.count).map(|l| patch.ctrl_of(&basis, l)).collect()
}

/// Quadrature along the cross-section boundary curve with cached
/// monomials, for lateral-surface integrals.
pub struct BoundaryRule {
    pub pts: Vec<BoundaryQp>,
}

pub struct BoundaryQp {
    pub xi2: f64,
    pub w: f64,
    pub bp: BoundaryPoint,
    pub pi: PiEval,
}

impl BoundaryRule {
    /// Gauss quadrature over `[a, b]` in `ξ²` (may wrap past 1) split into
    /// `n_sub` subintervals with `degree+1` points each.
    pub fn over_interval(patch: &RodPatch, a: f64, b: f64, n_sub: usize) -> Self {
        let q = patch.profile.boundary.degree();
        let mut pts = Vec::new();
        let len = b - a;
        for s in 0..n_sub {
            let lo = a + len * s as f64 / n_sub as f64;
            let hi = a + len * (s + 1) as f64 / n_sub as f64;
            for (u, w) in gauss_on(lo, hi, q + 1) {
                let xi2 = wrap_periodic(u, 0.0, 1.0);
                let bp = patch.profile.boundary_eval(xi2);
                pts.push(BoundaryQp {
                    xi2,
                    w,
                    pi: PiEval::new(patch.order, bp.zeta[0], bp.zeta[1]),
                    bp,
                });
            }
        }
        BoundaryRule { pts }
    }

    /// Rule over the whole closed boundary.
    pub fn full(patch: &RodPatch, n_sub: usize) -> Self {
        Self::over_interval(patch, 0.0, 1.0, n_sub)
    }
}

/// Strain-displacement operator: `δE̲ = Ξ̄ δq^e`, a `6 x n_e·n_cs` matrix
/// assembled from the covariant bases and the axis basis functions
/// (derivatives w.r.t. arc length).
pub fn strain_displacement(
    pi: &PiEval,
    basis: &RationalBasis,
    jtilde: f64,
    g1: &Vector3<f64>,
    g2: &Vector3<f64>,
    g3: &Vector3<f64>,
    out: &mut DMatrix<f64>,
) {
    let n_cs = 3 * pi.n_dir;
    let n_e = basis.count;
    debug_assert_eq!(out.nrows(), 6);
    debug_assert_eq!(out.ncols(), n_e * n_cs);
    // row = (part multiplied by N_I) + (part multiplied by N_{I,s})
    let mut row_a = vec![vec![0.0; n_cs]; 6];
    let mut row_b = vec![vec![0.0; n_cs]; 6];
    pi_spread(&pi.d1, g1, 1.0, &mut row_a[0]);
    pi_spread(&pi.d2, g2, 1.0, &mut row_a[1]);
    pi_spread(&pi.mu, g3, 1.0, &mut row_b[2]);
    pi_spread(&pi.d2, g1, 1.0, &mut row_a[3]);
    pi_spread(&pi.d1, g2, 1.0, &mut row_a[3]);
    pi_spread(&pi.d1, g3, 1.0, &mut row_a[4]);
    pi_spread(&pi.mu, g1, 1.0, &mut row_b[4]);
    pi_spread(&pi.d2, g3, 1.0, &mut row_a[5]);
    pi_spread(&pi.mu, g2, 1.0, &mut row_b[5]);
    for i in 0..n_e {
        let n = basis.values[i];
        let ns = basis.d1[i] / jtilde;
        for r in 0..6 {
            for c in 0..n_cs {
                out[(r, i * n_cs + c)] = row_a[r][c] * n + row_b[r][c] * ns;
            }
        }
    }
}

/// Internal force, optional consistent tangent, and strain energy of one
/// element.
pub struct ElementInternal {
    pub f: DVector<f64>,
    pub k: Option<DMatrix<f64>>,
    pub energy: f64,
}

pub fn internal_forces(
    patch: &RodPatch,
    ctx: &PatchContext,
    material: &MaterialModel,
    coeffs: &DMatrix<f64>,
    e: usize,
    want_k: bool,
) -> Result<ElementInternal> {
    let n_cs = patch.n_cs();
    let n_dir = patch.order.n_dir();
    let n_e = patch.axis0.degree() + 1;
    let m = n_e * n_cs;
    let mut f = DVector::<f64>::zeros(m);
    let mut k = if want_k {
        Some(DMatrix::<f64>::zeros(m, m))
    } else {
        None
    };
    let mut energy = 0.0;
    let mut xi_mat = DMatrix::<f64>::zeros(6, m);

    for &(xi, wg) in &ctx.axis_rule[e] {
        let basis = patch.basis_at(xi, 1)?;
        let jt = patch.jtilde(xi)?;
        let (q, q1, _) = patch.interp(coeffs, &basis, 1);
        let (q0, q01, _) = patch.interp(&patch.q0, &basis, 1);
        let q_s = &q1 / jt;
        let q0_s = &q01 / jt;

        let mut kg11 = DMatrix::<f64>::zeros(n_dir, n_dir);
        let mut kg12 = DMatrix::<f64>::zeros(n_dir, n_dir);
        let mut kg22 = DMatrix::<f64>::zeros(n_dir, n_dir);

        for ip in &ctx.interior {
            let (g1, g2, g3) = current_bases(&ip.pi, &q, &q_s);
            let (big1, big2, big3) = current_bases(&ip.pi, &q0, &q0_s);
            let j0 = volume_jacobian(&big1, &big2, &big3, ip.zeta1, ip.zeta2, xi)?;
            let g_cov = metric(&g1, &g2, &g3);
            let big_cov = metric(&big1, &big2, &big3);
            let st = material.evaluate(&g_cov, &big_cov).map_err(|err| match err {
                Error::InvertedElement { det, .. } => Error::InvertedElement {
                    det,
                    zeta1: ip.zeta1,
                    zeta2: ip.zeta2,
                    xi1: xi,
                },
                other => other,
            })?;
            let scale = j0 * ip.w * jt * wg;
            energy += material.energy(&g_cov, &big_cov)? * scale;

            strain_displacement(&ip.pi, &basis, jt, &g1, &g2, &g3, &mut xi_mat);
            let s_scaled: SVector<f64, 6> = st.s * scale;
            f.gemv_tr(1.0, &xi_mat, &s_scaled, 1.0);

            if let Some(kk) = k.as_mut() {
                let c_scaled: SMatrix<f64, 6, 6> = st.c * scale;
                let t = c_scaled * &xi_mat;
                kk.gemm_tr(1.0, &xi_mat, &t, 1.0);

                // geometric blocks over the cross-section: j0-weighted only
                let wj = j0 * ip.w;
                let s = &st.s;
                let (m1, m2, m0) = (&ip.pi.d1, &ip.pi.d2, &ip.pi.mu);
                for a in 0..n_dir {
                    for b in 0..n_dir {
                        kg11[(a, b)] += wj
                            * (s[0] * m1[a] * m1[b]
                                + s[3] * (m1[a] * m2[b] + m2[a] * m1[b])
                                + s[1] * m2[a] * m2[b]);
                        kg12[(a, b)] += wj * (s[4] * m1[a] * m0[b] + s[5] * m2[a] * m0[b]);
                        kg22[(a, b)] += wj * s[2] * m0[a] * m0[b];
                    }
                }
            }
        }

        if let Some(kk) = k.as_mut() {
            let jw = jt * wg;
            for i in 0..n_e {
                let (ni, nis) = (basis.values[i], basis.d1[i] / jt);
                for j in 0..n_e {
                    let (nj, njs) = (basis.values[j], basis.d1[j] / jt);
                    for a in 0..n_dir {
                        for b in 0..n_dir {
                            let v = jw
                                * (ni * kg11[(a, b)] * nj
                                    + ni * kg12[(a, b)] * njs
                                    + nis * kg12[(b, a)] * nj
                                    + nis * kg22[(a, b)] * njs);
                            if v != 0.0 {
                                for c in 0..3 {
                                    kk[(i * n_cs + 3 * a + c, j * n_cs + 3 * b + c)] += v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(ElementInternal { f, k, energy })
}

/// Which end of the axis domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum End {
    Start,
    End,
}

impl End {
    pub fn xi1(&self) -> f64 {
        match self {
            End::Start => 0.0,
            End::End => 1.0,
        }
    }

    /// Sign of the outward end normal relative to `g1 x g2`.
    pub fn normal_sign(&self) -> f64 {
        match self {
            End::Start => -1.0,
            End::End => 1.0,
        }
    }

    pub fn element(&self, patch: &RodPatch) -> usize {
        match self {
            End::Start => 0,
            End::End => patch.n_elements() - 1,
        }
    }
}

/// Body force per unit undeformed volume: element load vector
/// `∫ Ñᵀ (∫ Π b₀ j₀ dA) j̃ dξ¹`.
pub fn body_force(
    patch: &RodPatch,
    ctx: &PatchContext,
    e: usize,
    b0: &Vector3<f64>,
) -> Result<DVector<f64>> {
    let n_cs = patch.n_cs();
    let n_e = patch.axis0.degree() + 1;
    let mut f = DVector::<f64>::zeros(n_e * n_cs);
    for &(xi, wg) in &ctx.axis_rule[e] {
        let basis = patch.basis_at(xi, 1)?;
        let jt = patch.jtilde(xi)?;
        let (q0, q01, _) = patch.interp(&patch.q0, &basis, 1);
        let q0_s = &q01 / jt;
        for ip in &ctx.interior {
            let (big1, big2, big3) = current_bases(&ip.pi, &q0, &q0_s);
            let j0 = volume_jacobian(&big1, &big2, &big3, ip.zeta1, ip.zeta2, xi)?;
            let scale = j0 * ip.w * jt * wg;
            for i in 0..n_e {
                pi_spread(
                    &ip.pi.mu,
                    b0,
                    scale * basis.values[i],
                    &mut f.as_mut_slice()[i * n_cs..(i + 1) * n_cs],
                );
            }
        }
    }
    Ok(f)
}

/// Constant traction on an end cross-section:
/// `R̄₀ = ∫ Π T̄₀ ‖G1 x G2‖ dA` applied at the end basis.
pub fn end_traction(
    patch: &RodPatch,
    ctx: &PatchContext,
    end: End,
    traction: &Vector3<f64>,
) -> Result<(usize, DVector<f64>)> {
    let n_cs = patch.n_cs();
    let n_e = patch.axis0.degree() + 1;
    let mut f = DVector::<f64>::zeros(n_e * n_cs);
    let xi = end.xi1();
    let basis = patch.basis_at(xi, 1)?;
    let jt = patch.jtilde(xi)?;
    let (q0, q01, _) = patch.interp(&patch.q0, &basis, 1);
    let q0_s = &q01 / jt;
    for ip in &ctx.interior {
        let (big1, big2, _) = current_bases(&ip.pi, &q0, &q0_s);
        let da = big1.cross(&big2).norm() * ip.w;
        for i in 0..n_e {
            pi_spread(
                &ip.pi.mu,
                traction,
                da * basis.values[i],
                &mut f.as_mut_slice()[i * n_cs..(i + 1) * n_cs],
            );
        }
    }
    Ok((end.element(patch), f))
}

/// Constant traction per unit undeformed area on the lateral surface:
/// `∫ Ñᵀ (∫ Π T̄₀ J̃ dξ²) dξ¹` for one element.
pub fn lateral_traction(
    patch: &RodPatch,
    ctx: &PatchContext,
    rule: &BoundaryRule,
    e: usize,
    traction: &Vector3<f64>,
) -> Result<DVector<f64>> {
    let n_cs = patch.n_cs();
    let n_e = patch.axis0.degree() + 1;
    let mut f = DVector::<f64>::zeros(n_e * n_cs);
    for &(xi, wg) in &ctx.axis_rule[e] {
        let basis = patch.basis_at(xi, 2)?;
        let (q0, q01, q011) = patch.interp(&patch.q0, &basis, 2);
        for qp in &rule.pts {
            let frame0 = surface_frame(&qp.pi, &qp.bp, &q0, &q01, &q011)?;
            let scale = frame0.jsurf * qp.w * wg;
            for i in 0..n_e {
                pi_spread(
                    &qp.pi.mu,
                    traction,
                    scale * basis.values[i],
                    &mut f.as_mut_slice()[i * n_cs..(i + 1) * n_cs],
                );
            }
        }
    }
    Ok(f)
}

/// End moment applied as a follower traction distribution
/// `T̄₀ = -(M/I) ζ¹ ν_t` over a rectangular end cross-section.
///
/// Returns the element index, the load vector and the (nonsymmetric) load
/// stiffness; the latter enters the global tangent with negative sign
/// since the load sits on the external side of the balance.
pub fn follower_end_moment(
    patch: &RodPatch,
    ctx: &PatchContext,
    coeffs: &DMatrix<f64>,
    end: End,
    moment: f64,
) -> Result<(usize, DVector<f64>, DMatrix<f64>)> {
    let (h, w) = match patch.profile.shape {
        ProfileShape::Rectangle { h, w } => (h, w),
        _ => {
            return Err(Error::Unsupported(
                "follower end moments require a rectangular cross-section".into(),
            ))
        }
    };
    let inertia = w * h * h * h / 12.0;
    let n_cs = patch.n_cs();
    let n_dir = patch.order.n_dir();
    let n_e = patch.axis0.degree() + 1;
    let m = n_e * n_cs;
    let mut f = DVector::<f64>::zeros(m);
    let mut s_nc = DMatrix::<f64>::zeros(m, m);
    let xi = end.xi1();
    let sign = end.normal_sign();
    let basis = patch.basis_at(xi, 1)?;
    let jt = patch.jtilde(xi)?;
    let (q, _, _) = patch.interp(coeffs, &basis, 1);
    let (q0, q01, _) = patch.interp(&patch.q0, &basis, 1);
    let q0_s = &q01 / jt;

    // cross-section block of S̄_nc scaled by (M/I) ζ¹, then expanded with
    // the end basis values
    let mut s_cs = DMatrix::<f64>::zeros(n_cs, n_cs);
    for ip in &ctx.interior {
        let g1 = pi_apply(&ip.pi.d1, &q);
        let g2 = pi_apply(&ip.pi.d2, &q);
        let (big1, big2, _) = current_bases(&ip.pi, &q0, &q0_s);
        let cross = g1.cross(&g2);
        let norm_g = cross.norm();
        if norm_g < 1e-14 {
            return Err(Error::Degenerate {
                what: "degenerate end cross-section".into(),
                zeta1: ip.zeta1,
                zeta2: ip.zeta2,
                xi1: xi,
            });
        }
        let norm_big = big1.cross(&big2).norm();
        let nu = cross * (sign / norm_g);
        let pbar = -(moment / inertia) * ip.zeta1;
        let t0 = nu * pbar;
        for i in 0..n_e {
            pi_spread(
                &ip.pi.mu,
                &t0,
                norm_big * ip.w * basis.values[i],
                &mut f.as_mut_slice()[i * n_cs..(i + 1) * n_cs],
            );
        }

        // S̄_nc = sign (‖G1xG2‖/‖g1xg2‖) Π (1 - ν⊗ν)(ĝ2 Π_{,ζ1}ᵀ - ĝ1 Π_{,ζ2}ᵀ)
        let proj = Matrix3::identity() - nu * nu.transpose();
        let w_mat: Matrix3<f64> = proj * skew(&g2);
        let v_mat: Matrix3<f64> = proj * skew(&g1);
        let factor = (moment / inertia) * ip.zeta1 * sign * (norm_big / norm_g) * ip.w;
        for a in 0..n_dir {
            for b in 0..n_dir {
                let c1 = ip.pi.mu[a] * ip.pi.d1[b] * factor;
                let c2 = ip.pi.mu[a] * ip.pi.d2[b] * factor;
                if c1 == 0.0 && c2 == 0.0 {
                    continue;
                }
                for r in 0..3 {
                    for cc in 0..3 {
                        s_cs[(3 * a + r, 3 * b + cc)] +=
                            c1 * w_mat[(r, cc)] - c2 * v_mat[(r, cc)];
                    }
                }
            }
        }
    }
    for i in 0..n_e {
        for j in 0..n_e {
            let nij = basis.values[i] * basis.values[j];
            if nij == 0.0 {
                continue;
            }
            for r in 0..n_cs {
                for c in 0..n_cs {
                    s_nc[(i * n_cs + r, j * n_cs + c)] += nij * s_cs[(r, c)];
                }
            }
        }
    }
    Ok((end.element(patch), f, s_nc))
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v[2], v[1], v[2], 0.0, -v[0], -v[1], v[0], 0.0)
}

/// Weak displacement enforcement on a lateral-surface region: penalty
/// force and (constant, symmetric PSD) penalty stiffness of one element.
///
/// The region is `xi1_range x` the `ξ²` interval baked into `rule`; `ubar`
/// is the prescribed displacement of the region.
pub fn dirichlet_penalty(
    patch: &RodPatch,
    ctx: &PatchContext,
    rule: &BoundaryRule,
    e: usize,
    xi1_range: (f64, f64),
    coeffs: &DMatrix<f64>,
    eps_d: f64,
    ubar: &Vector3<f64>,
    want_k: bool,
) -> Result<(DVector<f64>, Option<DMatrix<f64>>)> {
    let n_cs = patch.n_cs();
    let n_dir = patch.order.n_dir();
    let n_e = patch.axis0.degree() + 1;
    let m = n_e * n_cs;
    let mut f = DVector::<f64>::zeros(m);
    let mut k = if want_k {
        Some(DMatrix::<f64>::zeros(m, m))
    } else {
        None
    };
    for &(xi, wg) in &ctx.axis_rule[e] {
        if xi < xi1_range.0 || xi > xi1_range.1 {
            continue;
        }
        let basis = patch.basis_at(xi, 2)?;
        let (q, _, _) = patch.interp(coeffs, &basis, 2);
        let (q0, q01, q011) = patch.interp(&patch.q0, &basis, 2);
        for qp in &rule.pts {
            let frame0 = surface_frame(&qp.pi, &qp.bp, &q0, &q01, &q011)?;
            let jsurf = frame0.jsurf;
            let u = pi_apply(&qp.pi.mu, &q) - pi_apply(&qp.pi.mu, &q0);
            let fd = (u - ubar) * eps_d;
            let scale = jsurf * qp.w * wg;
            for i in 0..n_e {
                pi_spread(
                    &qp.pi.mu,
                    &fd,
                    scale * basis.values[i],
                    &mut f.as_mut_slice()[i * n_cs..(i + 1) * n_cs],
                );
            }
            if let Some(kk) = k.as_mut() {
                for i in 0..n_e {
                    for j in 0..n_e {
                        let nij = basis.values[i] * basis.values[j] * scale * eps_d;
                        if nij == 0.0 {
                            continue;
                        }
                        for a in 0..n_dir {
                            for b in 0..n_dir {
                                let v = nij * qp.pi.mu[a] * qp.pi.mu[b];
                                if v != 0.0 {
                                    for c in 0..3 {
                                        kk[(i * n_cs + 3 * a + c, j * n_cs + 3 * b + c)] += v;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((f, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{CrossSectionProfile, DirectorOrder, DirectorSeed};
    use crate::material::MaterialKind;
    use crate::splines::NurbsCurve;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn beam(order: usize, p: usize, n_el: usize) -> (RodPatch, PatchContext, MaterialModel) {
        let axis =
            NurbsCurve::<3>::line(Vector3::zeros(), Vector3::new(10.0, 0.0, 0.0), p, n_el).unwrap();
        let profile = CrossSectionProfile::rectangle(0.2, 1.0, 3, 32, 4).unwrap();
        let patch = RodPatch::new(
            "beam",
            axis,
            DirectorSeed::Fixed(Vector3::z()),
            profile,
            DirectorOrder::new(order).unwrap(),
        )
        .unwrap();
        let ctx = PatchContext::new(&patch);
        let mat = MaterialModel::new(MaterialKind::StVenantKirchhoff, 1.2e7, 0.25).unwrap();
        (patch, ctx, mat)
    }

    fn perturbed(patch: &RodPatch, seed: u64, amp: f64) -> DMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut q = patch.q0.clone();
        for v in q.iter_mut() {
            *v += amp * rng.gen_range(-1.0..1.0);
        }
        q
    }

    fn total_energy(
        patch: &RodPatch,
        ctx: &PatchContext,
        mat: &MaterialModel,
        q: &DMatrix<f64>,
    ) -> f64 {
        (0..patch.n_elements())
            .map(|e| internal_forces(patch, ctx, mat, q, e, false).unwrap().energy)
            .sum()
    }

    /// Assemble patch-global force from element vectors.
    fn global_force(
        patch: &RodPatch,
        ctx: &PatchContext,
        mat: &MaterialModel,
        q: &DMatrix<f64>,
    ) -> DVector<f64> {
        let n_cs = patch.n_cs();
        let mut f = DVector::<f64>::zeros(patch.n_ctrl() * n_cs);
        for e in 0..patch.n_elements() {
            let out = internal_forces(patch, ctx, mat, q, e, false).unwrap();
            for (l, &g) in element_ctrls(patch, e).iter().enumerate() {
                for c in 0..n_cs {
                    f[g * n_cs + c] += out.f[l * n_cs + c];
                }
            }
        }
        f
    }

    #[test]
    fn reference_placement_is_stress_free() {
        let (patch, ctx, mat) = beam(2, 3, 4);
        for e in 0..patch.n_elements() {
            let out = internal_forces(&patch, &ctx, &mat, &patch.q0, e, true).unwrap();
            assert!(out.f.norm() < 1e-8, "F_int = {}", out.f.norm());
            assert!(out.energy.abs() < 1e-12);
            let k = out.k.unwrap();
            assert_relative_eq!((&k - &k.transpose()).norm() / k.norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn strain_displacement_matches_strain_perturbation() {
        let (patch, ctx, mat) = beam(2, 2, 3);
        let _ = (ctx, mat);
        let coeffs = perturbed(&patch, 1, 0.05);
        let xi = 0.37;
        let basis = patch.basis_at(xi, 1).unwrap();
        let jt = patch.jtilde(xi).unwrap();
        let (z1, z2) = (0.04, -0.31);
        let pi = PiEval::new(patch.order, z1, z2);
        let n_cs = patch.n_cs();
        let n_e = basis.count;

        let strain = |q: &DMatrix<f64>| {
            let (qv, q1, _) = patch.interp(q, &basis, 1);
            let (g1, g2, g3) = current_bases(&pi, &qv, &(q1 / jt));
            let (q0v, q01, _) = patch.interp(&patch.q0, &basis, 1);
            let (b1, b2, b3) = current_bases(&pi, &q0v, &(q01 / jt));
            crate::kinematics::green_lagrange_voigt(&metric(&g1, &g2, &g3), &metric(&b1, &b2, &b3))
        };

        let (qv, q1, _) = patch.interp(&coeffs, &basis, 1);
        let (g1, g2, g3) = current_bases(&pi, &qv, &(q1 / jt));
        let mut xi_mat = DMatrix::<f64>::zeros(6, n_e * n_cs);
        strain_displacement(&pi, &basis, jt, &g1, &g2, &g3, &mut xi_mat);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let h = 1e-7;
        for _ in 0..5 {
            // random element-supported perturbation
            let mut dq = DVector::<f64>::zeros(n_e * n_cs);
            for v in dq.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            let mut qp = coeffs.clone();
            let mut qm = coeffs.clone();
            for (l, &g) in element_ctrls(&patch, basis_span_element(&patch, &basis)).iter().enumerate()
            {
                for c in 0..n_cs {
                    qp[(g, c)] += h * dq[l * n_cs + c];
                    qm[(g, c)] -= h * dq[l * n_cs + c];
                }
            }
            let fd = (strain(&qp) - strain(&qm)) / (2.0 * h);
            let pred = &xi_mat * &dq;
            for r in 0..6 {
                assert_relative_eq!(pred[r], fd[r], epsilon = 1e-6, max_relative = 1e-6);
            }
        }

        // at ζ = 0 with N=1, in-plane rows respond only to director columns
        let (patch1, _, _) = beam(1, 2, 3);
        let coeffs1 = perturbed(&patch1, 3, 0.05);
        let basis1 = patch1.basis_at(xi, 1).unwrap();
        let pi0 = PiEval::new(patch1.order, 0.0, 0.0);
        let (qv, q1, _) = patch1.interp(&coeffs1, &basis1, 1);
        let (g1, g2, g3) = current_bases(&pi0, &qv, &(q1 / jt));
        let mut xm = DMatrix::<f64>::zeros(6, basis1.count * patch1.n_cs());
        strain_displacement(&pi0, &basis1, jt, &g1, &g2, &g3, &mut xm);
        for i in 0..basis1.count {
            for c in 0..3 {
                // order-0 (φ) columns of rows 1, 2, 4 vanish
                assert_eq!(xm[(0, i * 9 + c)], 0.0);
                assert_eq!(xm[(1, i * 9 + c)], 0.0);
                assert_eq!(xm[(3, i * 9 + c)], 0.0);
            }
        }
    }

    fn basis_span_element(patch: &RodPatch, basis: &RationalBasis) -> usize {
        // for clamped uniform vectors the element ordinal equals span - degree
        basis.span - patch.axis0.degree()
    }

    #[test]
    fn uniform_stretch_axial_force_closed_form() {
        // single linear element, uniform stretch: end force = λ S33 A
        let p = 1;
        let (patch, ctx, mat) = beam(1, p, 1);
        let lambda = 1.07;
        let mut q = patch.q0.clone();
        for i in 0..patch.n_ctrl() {
            q[(i, 0)] *= lambda; // stretch x-coordinates about x = 0
        }
        let out = internal_forces(&patch, &ctx, &mat, &q, 0, false).unwrap();
        let (lam, mu) = mat.lame();
        let e33 = 0.5 * (lambda * lambda - 1.0);
        let s33 = (lam + 2.0 * mu) * e33;
        let area = 0.2;
        let expect = lambda * s33 * area;
        let n_cs = patch.n_cs();
        assert_relative_eq!(out.f[0], -expect, max_relative = 1e-10);
        assert_relative_eq!(out.f[n_cs], expect, max_relative = 1e-10);
    }

    #[test]
    fn internal_force_is_energy_gradient() {
        let (patch, ctx, mat) = beam(2, 3, 3);
        let q = perturbed(&patch, 7, 0.05);
        let f = global_force(&patch, &ctx, &mat, &q);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let h = 1e-6;
        for _ in 0..20 {
            let mut dir = DMatrix::<f64>::zeros(patch.n_ctrl(), patch.n_cs());
            for v in dir.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            let ep = total_energy(&patch, &ctx, &mat, &(q.clone() + dir.clone() * h));
            let em = total_energy(&patch, &ctx, &mat, &(q.clone() - dir.clone() * h));
            let fd = (ep - em) / (2.0 * h);
            let mut pred = 0.0;
            for i in 0..patch.n_ctrl() {
                for c in 0..patch.n_cs() {
                    pred += f[i * patch.n_cs() + c] * dir[(i, c)];
                }
            }
            assert_relative_eq!(pred, fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn tangent_is_force_jacobian_and_symmetric() {
        for kind in [MaterialKind::StVenantKirchhoff, MaterialKind::NeoHookean] {
            let (patch, ctx, _) = beam(2, 2, 2);
            let mat = MaterialModel::new(kind, 1.2e7, 0.25).unwrap();
            let q = perturbed(&patch, 11, 0.04);
            let e = 1;
            let out = internal_forces(&patch, &ctx, &mat, &q, e, true).unwrap();
            let k = out.k.unwrap();
            assert!((&k - &k.transpose()).norm() / k.norm() < 1e-10, "symmetry");

            let ctrls = element_ctrls(&patch, e);
            let n_cs = patch.n_cs();
            let h = 1e-6;
            for (l, &g) in ctrls.iter().enumerate() {
                for c in 0..n_cs {
                    let mut qp = q.clone();
                    let mut qm = q.clone();
                    qp[(g, c)] += h;
                    qm[(g, c)] -= h;
                    let fp = internal_forces(&patch, &ctx, &mat, &qp, e, false).unwrap().f;
                    let fm = internal_forces(&patch, &ctx, &mat, &qm, e, false).unwrap().f;
                    let fd = (fp - fm) / (2.0 * h);
                    let col = l * n_cs + c;
                    for r in 0..k.nrows() {
                        assert_relative_eq!(
                            k[(r, col)],
                            fd[r],
                            epsilon = 1e-5 * k.norm().max(1.0),
                            max_relative = 1e-5
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn rigid_translation_leaves_internal_force_unchanged() {
        let (patch, ctx, mat) = beam(2, 3, 3);
        let q = perturbed(&patch, 13, 0.05);
        let f = global_force(&patch, &ctx, &mat, &q);
        let mut qt = q.clone();
        for i in 0..patch.n_ctrl() {
            qt[(i, 0)] += 1.3;
            qt[(i, 1)] -= 0.7;
            qt[(i, 2)] += 2.1;
        }
        let ft = global_force(&patch, &ctx, &mat, &qt);
        let rel = (&f - &ft).norm() / f.norm();
        assert!(rel < 1e-11, "translation invariance, rel = {rel:.3e}");
    }

    #[test]
    fn external_loads_reference_cases() {
        let (patch, ctx, _) = beam(1, 2, 2);
        // zero loads -> zero
        let f = body_force(&patch, &ctx, 0, &Vector3::zeros()).unwrap();
        assert_eq!(f.norm(), 0.0);
        // constant end traction t e3 on the rectangle: resultant = t h w
        let t = 123.0;
        let (_, f) = end_traction(&patch, &ctx, End::End, &(Vector3::z() * t)).unwrap();
        let n_cs = patch.n_cs();
        let mut sum = Vector3::zeros();
        for i in 0..(patch.axis0.degree() + 1) {
            sum += Vector3::new(f[i * n_cs], f[i * n_cs + 1], f[i * n_cs + 2]);
        }
        assert_relative_eq!(sum[2], t * 0.2, max_relative = 1e-12);
        // uniform pressure on a cylinder: zero net force by symmetry
        let axis =
            NurbsCurve::<3>::line(Vector3::zeros(), Vector3::new(4.0, 0.0, 0.0), 2, 2).unwrap();
        let profile = CrossSectionProfile::circle(0.5, 3, 48, 4, 8).unwrap();
        let cyl = RodPatch::new(
            "cyl",
            axis,
            DirectorSeed::Fixed(Vector3::y()),
            profile,
            DirectorOrder::new(1).unwrap(),
        )
        .unwrap();
        let cctx = PatchContext::new(&cyl);
        let rule = BoundaryRule::full(&cyl, 16);
        // radial "pressure" expressed as a constant vector has zero net
        // only over the full circumference; use a constant traction and
        // check the total equals traction * area instead, then check a
        // pure radial field integrates to zero via two opposite halves
        let f = lateral_traction(&cyl, &cctx, &rule, 0, &Vector3::z()).unwrap();
        let mut sum = Vector3::zeros();
        let n_cs = cyl.n_cs();
        for i in 0..(cyl.axis0.degree() + 1) {
            sum += Vector3::new(f[i * n_cs], f[i * n_cs + 1], f[i * n_cs + 2]);
        }
        // constant traction integrates to T * (surface area of the element span)
        let span = 2.0; // 4 m axis, 2 elements
        let area = span * std::f64::consts::TAU * 0.5;
        assert_relative_eq!(sum[2], area, max_relative = 1e-3);
        assert!(sum[0].abs() < 1e-10 && sum[1].abs() < 1e-10);
    }

    #[test]
    fn follower_moment_reference_and_consistency() {
        let (patch, ctx, _) = beam(2, 2, 2);
        // zero moment -> zero output
        let (_, f, s) = follower_end_moment(&patch, &ctx, &patch.q0, End::End, 0.0).unwrap();
        assert_eq!(f.norm(), 0.0);
        assert_eq!(s.norm(), 0.0);

        // reference placement: torque about the width axis equals M
        let m_val = 4523.9;
        let (_, f, _) = follower_end_moment(&patch, &ctx, &patch.q0, End::End, m_val).unwrap();
        // resultant torque of the order-1 director rows: for reference
        // placement the traction is T = -(M/I) ζ1 D3 and the torque about
        // the centroid is ∫ (ζ1 D1 + ζ2 D2) x T dA = M D2.
        // The d^(1,0) force block carries ∫ ζ1 T dA = -M D3… so compute the
        // torque directly from the director-conjugate blocks:
        // torque = D1 x f_{d(1,0)} + D2 x f_{d(0,1)}.
        let n_cs = patch.n_cs();
        let tri = patch.directors_at(1.0).unwrap();
        let mut f10 = Vector3::zeros();
        let mut f01 = Vector3::zeros();
        let i10 = patch.order.index_of(1, 0);
        let i01 = patch.order.index_of(0, 1);
        for i in 0..(patch.axis0.degree() + 1) {
            for c in 0..3 {
                f10[c] += f[i * n_cs + 3 * i10 + c];
                f01[c] += f[i * n_cs + 3 * i01 + c];
            }
        }
        let torque = tri.d1.cross(&f10) + tri.d2.cross(&f01);
        assert_relative_eq!((torque - tri.d2 * m_val).norm() / m_val, 0.0, epsilon = 1e-10);

        // FD of the load vector against the load stiffness
        let q = perturbed(&patch, 17, 0.03);
        let (e, _, s) = follower_end_moment(&patch, &ctx, &q, End::End, m_val).unwrap();
        let ctrls = element_ctrls(&patch, e);
        let h = 1e-6;
        for (l, &g) in ctrls.iter().enumerate() {
            for c in 0..n_cs {
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[(g, c)] += h;
                qm[(g, c)] -= h;
                let fp = follower_end_moment(&patch, &ctx, &qp, End::End, m_val).unwrap().1;
                let fm = follower_end_moment(&patch, &ctx, &qm, End::End, m_val).unwrap().1;
                let fd = (fp - fm) / (2.0 * h);
                for r in 0..s.nrows() {
                    assert_relative_eq!(
                        s[(r, l * n_cs + c)],
                        fd[r],
                        epsilon = 2e-5 * s.norm().max(1.0),
                        max_relative = 2e-5
                    );
                }
            }
        }
    }

    #[test]
    fn dirichlet_penalty_zero_residual_and_psd() {
        let (patch, ctx, _) = beam(1, 2, 2);
        let rule = BoundaryRule::over_interval(&patch, 0.6, 0.9, 8);
        // u = ubar everywhere: translate the whole patch by ubar
        let ubar = Vector3::new(0.01, -0.02, 0.005);
        let mut q = patch.q0.clone();
        for i in 0..patch.n_ctrl() {
            for c in 0..3 {
                q[(i, c)] += ubar[c];
            }
        }
        let (f, k) = dirichlet_penalty(
            &patch,
            &ctx,
            &rule,
            0,
            (0.0, 1.0),
            &q,
            1e7,
            &ubar,
            true,
        )
        .unwrap();
        assert!(f.norm() < 1e-6, "penalty residual {}", f.norm());
        let k = k.unwrap();
        assert_relative_eq!((&k - &k.transpose()).norm(), 0.0, epsilon = 1e-8 * k.norm());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
        for _ in 0..100 {
            let x = DVector::<f64>::from_fn(k.nrows(), |_, _| rng.gen_range(-1.0..1.0));
            let v = x.dot(&(&k * &x));
            assert!(v >= -1e-9 * k.norm(), "not PSD: {v}");
        }
        // empty region -> zero contributions
        let (f, k) = dirichlet_penalty(
            &patch,
            &ctx,
            &rule,
            0,
            (2.0, 3.0),
            &q,
            1e7,
            &ubar,
            true,
        )
        .unwrap();
        assert_eq!(f.norm(), 0.0);
        assert_eq!(k.unwrap().norm(), 0.0);
    }
}
