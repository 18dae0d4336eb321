//! Director-expansion kinematics of the rod.
//!
//! A material point is `x = Π(ζ¹,ζ²)ᵀ q(ξ¹)` where `q` stacks all
//! directors of orders `0..=N` and `Π` stacks the transverse monomials
//! `(ζ¹)^m (ζ²)^n` times 3x3 identity blocks. Everything downstream
//! (strains, surface frames, contact) is built from contractions with the
//! monomial vector and its `ζ`-derivatives, so `Π` is never materialized.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, SVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::quadrature::{disc_rule, gauss_on, rectangle_rule};
use crate::splines::{wrap_periodic, NurbsCurve, RationalBasis};
use crate::{Error, Result};

/// Order of the transverse director expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectorOrder(usize);

impl DirectorOrder {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("director order must be positive".into()));
        }
        Ok(DirectorOrder(n))
    }

    pub fn n(&self) -> usize {
        self.0
    }

    /// Number of directors per cross-section, `(N+1)(N+2)/2`.
    pub fn n_dir(&self) -> usize {
        (self.0 + 1) * (self.0 + 2) / 2
    }

    /// Number of DOFs per cross-section, `3 n_dir`.
    pub fn n_cs(&self) -> usize {
        3 * self.n_dir()
    }

    /// Flat director index of `d^(m,n)`; directors are ordered by total
    /// order, within an order by descending first exponent.
    pub fn index_of(&self, m: usize, n: usize) -> usize {
        let ord = m + n;
        debug_assert!(ord <= self.0);
        ord * (ord + 1) / 2 + n
    }
}

/// Monomial values and partial derivatives of the Π-operator at a
/// transverse point.
#[derive(Debug, Clone)]
pub struct PiEval {
    pub n_dir: usize,
    pub mu: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub d11: Vec<f64>,
    pub d12: Vec<f64>,
    pub d22: Vec<f64>,
}

impl PiEval {
    pub fn new(order: DirectorOrder, zeta1: f64, zeta2: f64) -> Self {
        let n_dir = order.n_dir();
        let mut out = PiEval {
            n_dir,
            mu: vec![0.0; n_dir],
            d1: vec![0.0; n_dir],
            d2: vec![0.0; n_dir],
            d11: vec![0.0; n_dir],
            d12: vec![0.0; n_dir],
            d22: vec![0.0; n_dir],
        };
        // powers with the convention 0^0 = 1, and coefficient 0 whenever an
        // exponent would go negative
        let pw = |z: f64, e: i64| -> f64 {
            if e < 0 {
                0.0
            } else {
                z.powi(e as i32)
            }
        };
        let mut k = 0;
        for ord in 0..=order.n() {
            for n in 0..=ord {
                let m = ord - n;
                let (mf, nf) = (m as f64, n as f64);
                out.mu[k] = pw(zeta1, m as i64) * pw(zeta2, n as i64);
                out.d1[k] = mf * pw(zeta1, m as i64 - 1) * pw(zeta2, n as i64);
                out.d2[k] = nf * pw(zeta1, m as i64) * pw(zeta2, n as i64 - 1);
                out.d11[k] = mf * (mf - 1.0) * pw(zeta1, m as i64 - 2) * pw(zeta2, n as i64);
                out.d12[k] = mf * nf * pw(zeta1, m as i64 - 1) * pw(zeta2, n as i64 - 1);
                out.d22[k] = nf * (nf - 1.0) * pw(zeta1, m as i64) * pw(zeta2, n as i64 - 2);
                k += 1;
            }
        }
        out
    }
}

/// `Πᵀ v` for a generalized vector `v`: contract a monomial vector with
/// the 3-blocks of `v`.
pub fn pi_apply(mono: &[f64], v: &DVector<f64>) -> Vector3<f64> {
    let mut out = Vector3::zeros();
    for (k, &m) in mono.iter().enumerate() {
        if m != 0.0 {
            out[0] += m * v[3 * k];
            out[1] += m * v[3 * k + 1];
            out[2] += m * v[3 * k + 2];
        }
    }
    out
}

/// `out += scale · Π w` for a 3-vector `w`: spread into the 3-blocks.
pub fn pi_spread(mono: &[f64], w: &Vector3<f64>, scale: f64, out: &mut [f64]) {
    for (k, &m) in mono.iter().enumerate() {
        if m != 0.0 {
            let s = scale * m;
            out[3 * k] += s * w[0];
            out[3 * k + 1] += s * w[1];
            out[3 * k + 2] += s * w[2];
        }
    }
}

/// Analytic tag of the cross-section shape, used by interior quadrature
/// and by helpers that want closed-form answers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ProfileShape {
    Circle { r: f64 },
    Rectangle { h: f64, w: f64 },
}

impl ProfileShape {
    pub fn area(&self) -> f64 {
        match self {
            ProfileShape::Circle { r } => std::f64::consts::PI * r * r,
            ProfileShape::Rectangle { h, w } => h * w,
        }
    }

    /// Largest distance from the centroid to the boundary.
    pub fn max_radius(&self) -> f64 {
        match self {
            ProfileShape::Circle { r } => *r,
            ProfileShape::Rectangle { h, w } => 0.5 * (h * h + w * w).sqrt(),
        }
    }
}

/// Faces of a rectangular cross-section, named by the outward coordinate
/// direction in the `(ζ¹, ζ²)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RectFace {
    PlusZeta1,
    PlusZeta2,
    MinusZeta1,
    MinusZeta2,
}

/// Boundary point of the profile curve with parametric derivatives.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryPoint {
    pub zeta: Vector2<f64>,
    pub d1: Vector2<f64>,
    pub d2: Vector2<f64>,
}

/// Smooth periodic boundary curve `ζ(ξ²)` plus an interior quadrature
/// rule over the reference cross-section domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossSectionProfile {
    pub shape: ProfileShape,
    pub boundary: NurbsCurve<2>,
    /// `(ζ¹, ζ², weight)` integrating over the cross-section area.
    pub interior: Vec<(f64, f64, f64)>,
    /// Corner radius used when rounding a rectangle (zero for circles).
    pub corner_radius: f64,
}

impl CrossSectionProfile {
    /// Circular section: periodic fit of the circle for the (contact)
    /// boundary, polar tensor Gauss inside.
    ///
    /// Boundary curves wind clockwise in the `(ζ¹, ζ²)` plane so that
    /// `a1 x a2` is the outward surface normal for a right-handed
    /// `(D1, D2, D3)` triad.
    pub fn circle(r: f64, degree: usize, m_cp: usize, n_rad: usize, n_ang: usize) -> Result<Self> {
        let target = move |t: f64| {
            let th = -std::f64::consts::TAU * t;
            Vector2::new(r * th.cos(), r * th.sin())
        };
        let boundary = crate::splines::fit_periodic(&target, degree, m_cp, (m_cp * 16).max(256))?;
        Ok(CrossSectionProfile {
            shape: ProfileShape::Circle { r },
            boundary,
            interior: disc_rule(r, n_rad, n_ang),
            corner_radius: 0.0,
        })
    }

    /// Rectangular section: the interior rule uses the exact rectangle;
    /// the boundary curve is a periodic fit of the rectangle with slightly
    /// rounded corners so the contact surface stays smooth.
    pub fn rectangle(h: f64, w: f64, degree: usize, m_cp: usize, n_gauss: usize) -> Result<Self> {
        let rc = 0.1 * h.min(w);
        let ccw = rounded_rect_sampler(h, w, rc);
        // reverse to clockwise winding, keeping t = 0 at the +ζ¹ face midpoint
        let sampler = move |t: f64| ccw(1.0 - wrap_periodic(t, 0.0, 1.0));
        let boundary = crate::splines::fit_periodic(&sampler, degree, m_cp, (m_cp * 16).max(256))?;
        Ok(CrossSectionProfile {
            shape: ProfileShape::Rectangle { h, w },
            boundary,
            interior: rectangle_rule(h, w, n_gauss),
            corner_radius: rc,
        })
    }

    /// Boundary point with first and second derivatives w.r.t. `ξ²`
    /// (periodic wrap applied).
    pub fn boundary_eval(&self, xi2: f64) -> BoundaryPoint {
        let u = wrap_periodic(xi2, 0.0, 1.0);
        let e = self.boundary.eval(u, 2).expect("periodic eval cannot fail");
        BoundaryPoint {
            zeta: e.x,
            d1: e.d1,
            d2: e.d2,
        }
    }

    /// Parameter interval of the flat part of a rectangle face.
    ///
    /// The boundary parameterization starts at the midpoint of the `+ζ¹`
    /// face and runs counter-clockwise proportional to arc length.
    pub fn face_interval(&self, face: RectFace) -> Result<(f64, f64)> {
        let (h, w) = match self.shape {
            ProfileShape::Rectangle { h, w } => (h, w),
            _ => {
                return Err(Error::Unsupported(
                    "face intervals exist only for rectangular sections".into(),
                ))
            }
        };
        let rc = self.corner_radius;
        let quarter = std::f64::consts::FRAC_PI_2 * rc;
        let per = 2.0 * (h + w) - 8.0 * rc + 4.0 * quarter;
        // arc length from the start to the beginning of each flat edge
        let e1 = 0.5 * w - rc; // remainder of +ζ¹ face
        let s_plus2 = e1 + quarter;
        let s_minus1 = s_plus2 + (h - 2.0 * rc) + quarter;
        let s_minus2 = s_minus1 + (w - 2.0 * rc) + quarter;
        let s_plus1b = s_minus2 + (h - 2.0 * rc) + quarter;
        let iv = match face {
            RectFace::PlusZeta2 => (s_plus2, s_plus2 + h - 2.0 * rc),
            RectFace::MinusZeta1 => (s_minus1, s_minus1 + w - 2.0 * rc),
            RectFace::MinusZeta2 => (s_minus2, s_minus2 + h - 2.0 * rc),
            // the +ζ¹ face wraps around the seam; report its second half
            // start so that the interval stays connected modulo 1
            RectFace::PlusZeta1 => (s_plus1b, s_plus1b + w - 2.0 * rc),
        };
        // arc lengths above follow the counter-clockwise path; the stored
        // curve winds clockwise, which mirrors the parameter
        Ok((1.0 - iv.1 / per, 1.0 - iv.0 / per))
    }
}

fn rounded_rect_sampler(h: f64, w: f64, rc: f64) -> impl Fn(f64) -> Vector2<f64> {
    let quarter = std::f64::consts::FRAC_PI_2 * rc;
    let lens = [
        0.5 * w - rc,  // +ζ¹ face, upper half
        quarter,       // corner (+,+)
        h - 2.0 * rc,  // +ζ² face
        quarter,       // corner (-,+)
        w - 2.0 * rc,  // -ζ¹ face
        quarter,       // corner (-,-)
        h - 2.0 * rc,  // -ζ² face
        quarter,       // corner (+,-)
        0.5 * w - rc,  // +ζ¹ face, lower half
    ];
    let per: f64 = lens.iter().sum();
    let (hh, hw) = (0.5 * h, 0.5 * w);
    move |t: f64| {
        let mut s = wrap_periodic(t, 0.0, 1.0) * per;
        let arc = |cx: f64, cy: f64, a0: f64, s: f64| {
            let a = a0 + s / rc;
            Vector2::new(cx + rc * a.cos(), cy + rc * a.sin())
        };
        for (i, &l) in lens.iter().enumerate() {
            if s <= l || i == lens.len() - 1 {
                return match i {
                    0 => Vector2::new(hh, s),
                    1 => arc(hh - rc, hw - rc, 0.0, s),
                    2 => Vector2::new(hh - rc - s, hw),
                    3 => arc(-hh + rc, hw - rc, std::f64::consts::FRAC_PI_2, s),
                    4 => Vector2::new(-hh, hw - rc - s),
                    5 => arc(-hh + rc, -hw + rc, std::f64::consts::PI, s),
                    6 => Vector2::new(-hh + rc + s, -hw),
                    7 => arc(hh - rc, -hw + rc, 1.5 * std::f64::consts::PI, s),
                    _ => Vector2::new(hh, -hw + rc + s),
                };
            }
            s -= l;
        }
        unreachable!()
    }
}

/// How the first initial director is seeded before projection onto the
/// plane normal to the axis tangent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DirectorSeed {
    /// A fixed global direction (must never become parallel to the tangent).
    Fixed(Vector3<f64>),
    /// Unit vector from the axis point toward `center` (gives an in-plane
    /// radial director on circular axes).
    Toward { center: Vector3<f64> },
}

/// Orthonormal initial director triad at one axis location, with
/// derivatives w.r.t. the axis parameter.
#[derive(Debug, Clone, Copy)]
pub struct DirectorTriad {
    pub d1: Vector3<f64>,
    pub d2: Vector3<f64>,
    pub d3: Vector3<f64>,
    pub d1_dxi: Vector3<f64>,
    pub d2_dxi: Vector3<f64>,
}

/// One rod: initial axis curve, director seed, cross-section profile,
/// director order and the initial generalized-director coefficients.
#[derive(Debug, Clone)]
pub struct RodPatch {
    pub name: String,
    pub axis0: NurbsCurve<3>,
    pub seed: DirectorSeed,
    pub profile: CrossSectionProfile,
    pub order: DirectorOrder,
    /// Initial control coefficients, `n_ctrl x n_cs`; row `I` stacks
    /// `d^(0,0), d^(1,0), d^(0,1), …` at control point `I`.
    pub q0: DMatrix<f64>,
}

impl RodPatch {
    pub fn new(
        name: impl Into<String>,
        axis0: NurbsCurve<3>,
        seed: DirectorSeed,
        profile: CrossSectionProfile,
        order: DirectorOrder,
    ) -> Result<Self> {
        let mut patch = RodPatch {
            name: name.into(),
            axis0,
            seed,
            profile,
            order,
            q0: DMatrix::zeros(0, 0),
        };
        patch.q0 = patch.build_initial_coeffs()?;
        Ok(patch)
    }

    pub fn n_ctrl(&self) -> usize {
        self.axis0.n_ctrl()
    }

    pub fn n_cs(&self) -> usize {
        self.order.n_cs()
    }

    pub fn n_elements(&self) -> usize {
        self.axis0.knot_vector().n_spans()
    }

    /// Initial director triad from the seed direction: project, normalize,
    /// complete by the cross product. Derivatives follow by the chain rule
    /// through the axis curve derivatives.
    pub fn directors_at(&self, xi1: f64) -> Result<DirectorTriad> {
        let e = self.axis0.eval(xi1, 2)?;
        let jt = e.d1.norm();
        if jt < 1e-14 {
            return Err(Error::Geometry(format!(
                "axis tangent vanishes at xi1 = {xi1}"
            )));
        }
        let d3 = e.d1 / jt;
        // d3' = (1 - d3 d3ᵀ) φ'' / ‖φ'‖
        let d3_dxi = (e.d2 - d3 * (d3.dot(&e.d2))) / jt;

        let (v, v_dxi) = match self.seed {
            DirectorSeed::Fixed(v) => (v, Vector3::zeros()),
            DirectorSeed::Toward { center } => {
                let r = center - e.x;
                let n = r.norm();
                if n < 1e-14 {
                    return Err(Error::Geometry("axis passes through seed center".into()));
                }
                let u = r / n;
                let du = -(e.d1 - u * u.dot(&e.d1)) / n;
                (u, du)
            }
        };
        let w = v - d3 * v.dot(&d3);
        let nw = w.norm();
        if nw < 1e-10 {
            return Err(Error::Geometry(format!(
                "director seed parallel to axis tangent at xi1 = {xi1}"
            )));
        }
        let w_dxi = v_dxi - d3_dxi * v.dot(&d3) - d3 * (v_dxi.dot(&d3) + v.dot(&d3_dxi));
        let d1 = w / nw;
        let d1_dxi = (w_dxi - d1 * d1.dot(&w_dxi)) / nw;
        let d2 = d3.cross(&d1);
        let d2_dxi = d3_dxi.cross(&d1) + d3.cross(&d1_dxi);
        Ok(DirectorTriad {
            d1,
            d2,
            d3,
            d1_dxi,
            d2_dxi,
        })
    }

    /// Jacobian `j̃ = ‖φ₀,ξ‖` of the arc-length map.
    pub fn jtilde(&self, xi1: f64) -> Result<f64> {
        Ok(self.axis0.eval(xi1, 1)?.d1.norm())
    }

    /// Rational axis basis at `xi1` (isoparametric: the same basis carries
    /// the generalized directors).
    pub fn basis_at(&self, xi1: f64, nderiv: usize) -> Result<RationalBasis> {
        self.axis0.rational_basis(xi1, nderiv)
    }

    /// Control index of the `local`-th active function of `basis`.
    pub fn ctrl_of(&self, basis: &RationalBasis, local: usize) -> usize {
        self.axis0.knot_vector().ctrl_index(basis.first, local)
    }

    /// Interpolate a coefficient matrix and its `ξ¹`-derivatives at a
    /// basis evaluation.
    pub fn interp(
        &self,
        coeffs: &DMatrix<f64>,
        basis: &RationalBasis,
        nderiv: usize,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let n_cs = self.n_cs();
        let mut q = DVector::zeros(n_cs);
        let mut q1 = DVector::zeros(n_cs);
        let mut q2 = DVector::zeros(n_cs);
        for l in 0..basis.count {
            let row = coeffs.row(self.ctrl_of(basis, l));
            for c in 0..n_cs {
                q[c] += basis.values[l] * row[c];
                if nderiv >= 1 {
                    q1[c] += basis.d1[l] * row[c];
                }
                if nderiv >= 2 {
                    q2[c] += basis.d2[l] * row[c];
                }
            }
        }
        (q, q1, q2)
    }

    /// Initial coefficients: order-0 rows are the axis control points,
    /// first-order rows collocate the director fields at the Greville
    /// abscissae, higher orders start at zero.
    fn build_initial_coeffs(&self) -> Result<DMatrix<f64>> {
        let n = self.n_ctrl();
        let n_cs = self.n_cs();
        let mut q0 = DMatrix::zeros(n, n_cs);
        for i in 0..n {
            let p = self.axis0.ctrl()[i];
            q0[(i, 0)] = p[0];
            q0[(i, 1)] = p[1];
            q0[(i, 2)] = p[2];
        }
        // Greville collocation of D1, D2
        let sites = self.axis0.greville();
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut rhs1 = DMatrix::<f64>::zeros(n, 3);
        let mut rhs2 = DMatrix::<f64>::zeros(n, 3);
        for (i, &u) in sites.iter().enumerate() {
            let b = self.axis0.rational_basis(u, 0)?;
            for l in 0..b.count {
                a[(i, self.ctrl_of(&b, l))] += b.values[l];
            }
            let t = self.directors_at(u)?;
            for c in 0..3 {
                rhs1[(i, c)] = t.d1[c];
                rhs2[(i, c)] = t.d2[c];
            }
        }
        let lu = a.lu();
        let s1 = lu
            .solve(&rhs1)
            .ok_or_else(|| Error::Geometry("director collocation singular".into()))?;
        let s2 = lu
            .solve(&rhs2)
            .ok_or_else(|| Error::Geometry("director collocation singular".into()))?;
        let i1 = self.order.index_of(1, 0);
        let i2 = self.order.index_of(0, 1);
        for i in 0..n {
            for c in 0..3 {
                q0[(i, 3 * i1 + c)] = s1[(i, c)];
                q0[(i, 3 * i2 + c)] = s2[(i, c)];
            }
        }
        Ok(q0)
    }

    /// Largest orthonormality defect of the interpolated initial director
    /// field over the axis quadrature points (diagnostic).
    pub fn director_defect(&self) -> Result<f64> {
        let kv = self.axis0.knot_vector();
        let mut worst: f64 = 0.0;
        for e in 0..kv.n_spans() {
            let (a, b) = kv.span_interval(e);
            for (u, _) in gauss_on(a, b, self.axis0.degree() + 1) {
                let basis = self.basis_at(u, 0)?;
                let (q, _, _) = self.interp(&self.q0, &basis, 0);
                let i1 = self.order.index_of(1, 0);
                let i2 = self.order.index_of(0, 1);
                let d1 = Vector3::new(q[3 * i1], q[3 * i1 + 1], q[3 * i1 + 2]);
                let d2 = Vector3::new(q[3 * i2], q[3 * i2 + 1], q[3 * i2 + 2]);
                worst = worst
                    .max((d1.norm() - 1.0).abs())
                    .max((d2.norm() - 1.0).abs())
                    .max(d1.dot(&d2).abs());
            }
        }
        Ok(worst)
    }
}

/// Covariant bases of the current configuration at a material point.
pub fn current_bases(
    pi: &PiEval,
    q: &DVector<f64>,
    q_s: &DVector<f64>,
) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    (
        pi_apply(&pi.d1, q),
        pi_apply(&pi.d2, q),
        pi_apply(&pi.mu, q_s),
    )
}

/// Symmetric metric `g_ij` of a basis triple.
pub fn metric(g1: &Vector3<f64>, g2: &Vector3<f64>, g3: &Vector3<f64>) -> Matrix3<f64> {
    let g = [g1, g2, g3];
    Matrix3::from_fn(|i, j| g[i].dot(g[j]))
}

/// Green-Lagrange strain in Voigt order `[E11,E22,E33,2E12,2E13,2E23]`.
pub fn green_lagrange_voigt(g_cov: &Matrix3<f64>, big_g_cov: &Matrix3<f64>) -> SVector<f64, 6> {
    let e = |i: usize, j: usize| 0.5 * (g_cov[(i, j)] - big_g_cov[(i, j)]);
    SVector::<f64, 6>::new(
        e(0, 0),
        e(1, 1),
        e(2, 2),
        2.0 * e(0, 1),
        2.0 * e(0, 2),
        2.0 * e(1, 2),
    )
}

/// Volume Jacobian `j0 = (G1 x G2) · G3` with a degeneracy check.
pub fn volume_jacobian(
    g1: &Vector3<f64>,
    g2: &Vector3<f64>,
    g3: &Vector3<f64>,
    zeta1: f64,
    zeta2: f64,
    xi1: f64,
) -> Result<f64> {
    let j0 = g1.cross(g2).dot(g3);
    if j0 <= 0.0 {
        return Err(Error::Degenerate {
            what: format!("volume Jacobian j0 = {j0:.4e} not positive"),
            zeta1,
            zeta2,
            xi1,
        });
    }
    Ok(j0)
}

/// Convective frame on the lateral surface: tangents, outward normal,
/// metric, curvature and the second parametric derivatives.
#[derive(Debug, Clone)]
pub struct SurfaceFrame {
    pub x: Vector3<f64>,
    pub a1: Vector3<f64>,
    pub a2: Vector3<f64>,
    pub nu: Vector3<f64>,
    pub a_cov: Matrix2<f64>,
    pub a_con: Matrix2<f64>,
    pub b: Matrix2<f64>,
    pub x11: Vector3<f64>,
    pub x12: Vector3<f64>,
    pub x22: Vector3<f64>,
    /// `‖a1 x a2‖`, the surface Jacobian in `(ξ¹, ξ²)` measure.
    pub jsurf: f64,
}

/// Build the surface frame from the boundary-curve data and the
/// generalized-director interpolants (`ξ¹`-derivatives, not arc-length).
///
/// With non-varying cross-sections `ζ^α` depends on `ξ²` only, which
/// removes all `ζ^α_{,1}` terms.
pub fn surface_frame(
    pi: &PiEval,
    bp: &BoundaryPoint,
    q: &DVector<f64>,
    q_x1: &DVector<f64>,
    q_x11: &DVector<f64>,
) -> Result<SurfaceFrame> {
    let x = pi_apply(&pi.mu, q);
    let a1 = pi_apply(&pi.mu, q_x1);
    let gz1 = pi_apply(&pi.d1, q);
    let gz2 = pi_apply(&pi.d2, q);
    let a2 = gz1 * bp.d1[0] + gz2 * bp.d1[1];

    let x11 = pi_apply(&pi.mu, q_x11);
    let x12 = pi_apply(&pi.d1, q_x1) * bp.d1[0] + pi_apply(&pi.d2, q_x1) * bp.d1[1];
    let x22 = pi_apply(&pi.d11, q) * (bp.d1[0] * bp.d1[0])
        + pi_apply(&pi.d12, q) * (2.0 * bp.d1[0] * bp.d1[1])
        + pi_apply(&pi.d22, q) * (bp.d1[1] * bp.d1[1])
        + gz1 * bp.d2[0]
        + gz2 * bp.d2[1];

    let n = a1.cross(&a2);
    let jsurf = n.norm();
    if jsurf < 1e-14 {
        return Err(Error::Geometry("degenerate lateral surface frame".into()));
    }
    let nu = n / jsurf;
    let a_cov = Matrix2::new(a1.dot(&a1), a1.dot(&a2), a1.dot(&a2), a2.dot(&a2));
    let a_con = a_cov
        .try_inverse()
        .ok_or_else(|| Error::Geometry("singular surface metric".into()))?;
    let b = Matrix2::new(x11.dot(&nu), x12.dot(&nu), x12.dot(&nu), x22.dot(&nu));
    Ok(SurfaceFrame {
        x,
        a1,
        a2,
        nu,
        a_cov,
        a_con,
        b,
        x11,
        x12,
        x22,
        jsurf,
    })
}

/// Geometrical centroid and area of the current cross-section at one
/// axis location.
pub fn centroid(patch: &RodPatch, coeffs: &DMatrix<f64>, xi1: f64) -> Result<(Vector3<f64>, f64)> {
    let basis = patch.basis_at(xi1, 0)?;
    let (q, _, _) = patch.interp(coeffs, &basis, 0);
    let mut area = 0.0;
    let mut first = Vector3::zeros();
    for &(z1, z2, w) in &patch.profile.interior {
        let pi = PiEval::new(patch.order, z1, z2);
        let x = pi_apply(&pi.mu, &q);
        let g1 = pi_apply(&pi.d1, &q);
        let g2 = pi_apply(&pi.d2, &q);
        let da = g1.cross(&g2).norm() * w;
        area += da;
        first += x * da;
    }
    if area <= 0.0 {
        return Err(Error::Degenerate {
            what: "nonpositive cross-section area".into(),
            zeta1: 0.0,
            zeta2: 0.0,
            xi1,
        });
    }
    Ok((first / area, area))
}
