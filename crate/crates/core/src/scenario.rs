//! Scenario definition: a serializable description of geometry, material,
//! boundary conditions, loads, contact pairs, solver settings and output
//! requests, plus built-in presets for the bundled examples.
//!
//! Files are TOML with a `schema_version` field. All quantities are SI;
//! penalty parameters are dimensionless multiples of `E / L0` with the
//! unit length `L0 = 1 m`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::contact::ContactParams;
use crate::element::End;
use crate::kinematics::{CrossSectionProfile, DirectorOrder, DirectorSeed, RectFace, RodPatch};
use crate::material::{MaterialKind, MaterialModel};
use crate::solver::{
    Constraint, CtrlSel, Load, Model, PairDef, PatchDef, Phase, Ramp, ScheduledConstraint,
    ScheduledLoad, SolveConfig, WeakBc,
};
use crate::splines::NurbsCurve;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Reference unit length for penalty scalings (m).
pub const UNIT_LENGTH: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub solver: SolverSpec,
    pub phases: Vec<PhaseSpec>,
    pub patches: Vec<PatchSpec>,
    #[serde(default)]
    pub constraints: Vec<ConstraintSpec>,
    #[serde(default)]
    pub loads: Vec<LoadSpec>,
    #[serde(default)]
    pub weak_bcs: Vec<WeakBcSpec>,
    #[serde(default)]
    pub contact_pairs: Vec<ContactPairSpec>,
    #[serde(default)]
    pub outputs: Vec<OutputSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSpec {
    pub newton_tol_res: f64,
    pub newton_tol_energy: f64,
    pub newton_max: usize,
    pub activeset_max: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let d = SolveConfig::default();
        SolverSpec {
            newton_tol_res: d.newton_tol_res,
            newton_tol_energy: d.newton_tol_energy,
            newton_max: d.newton_max,
            activeset_max: d.activeset_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub n_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub name: String,
    pub axis: AxisSpec,
    pub degree: usize,
    pub n_el: usize,
    pub director_order: usize,
    pub seed: SeedSpec,
    pub profile: ProfileSpec,
    #[serde(default = "default_profile_degree")]
    pub profile_degree: usize,
    #[serde(default = "default_profile_mcp")]
    pub profile_mcp: usize,
    pub material: MaterialSpec,
    #[serde(default)]
    pub rigid: bool,
}

fn default_profile_degree() -> usize {
    3
}
fn default_profile_mcp() -> usize {
    48
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AxisSpec {
    /// Straight segment with a clamped basis.
    Line { from: [f64; 3], to: [f64; 3] },
    /// Closed planar circle fitted by a periodic basis with `n_el`
    /// control points; `ea`, `eb` span the plane.
    ClosedCircle {
        center: [f64; 3],
        radius: f64,
        ea: [f64; 3],
        eb: [f64; 3],
    },
    /// Explicit NURBS data.
    Explicit { curve: NurbsCurve<3> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeedSpec {
    Fixed { v: [f64; 3] },
    Toward { center: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileSpec {
    Circle { r: f64 },
    Rectangle { h: f64, w: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialSpec {
    pub model: MaterialKind,
    pub e: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub patch: String,
    pub ramp: Ramp,
    pub kind: ConstraintKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ConstraintKind {
    Fix {
        ctrl: CtrlSel,
        comps: Vec<(usize, usize)>,
    },
    Translate {
        ctrl: CtrlSel,
        director: usize,
        mask: [bool; 3],
        vector: [f64; 3],
    },
    CircularPath {
        ctrl: CtrlSel,
        center: [f64; 2],
        angle: f64,
    },
    RigidTranslate { vector: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSpec {
    pub ramp: Ramp,
    pub kind: LoadKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LoadKind {
    FollowerEndMoment {
        patch: String,
        end: End,
        magnitude: f64,
    },
    BodyForce { patch: String, vector: [f64; 3] },
    EndTraction {
        patch: String,
        end: End,
        vector: [f64; 3],
    },
    LateralTraction { patch: String, vector: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakBcSpec {
    pub patch: String,
    /// Explicit parameter interval on the boundary curve, or a rectangle
    /// face name.
    #[serde(default)]
    pub xi2_range: Option<(f64, f64)>,
    #[serde(default)]
    pub face: Option<RectFace>,
    #[serde(default = "default_xi1_range")]
    pub xi1_range: (f64, f64),
    /// Penalty as a multiple of `E / L0` of the patch material.
    pub eps_d_scale: f64,
    pub ubar: [f64; 3],
    pub ramp: Ramp,
    #[serde(default = "default_weak_nsub")]
    pub n_sub: usize,
}

fn default_xi1_range() -> (f64, f64) {
    (0.0, 1.0)
}
fn default_weak_nsub() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactPairSpec {
    pub slave: String,
    pub master: String,
    /// Penalty as a multiple of `E / L0` (largest Young's modulus of the
    /// pair).
    pub eps_n_scale: f64,
    /// Cutoff radius; default three times the largest cross-section
    /// radius of the pair.
    #[serde(default)]
    pub r_c: Option<f64>,
    #[serde(default = "default_eps_theta")]
    pub eps_theta: f64,
    pub n_sub_axial: usize,
    pub m_sub_circ: usize,
    #[serde(default = "default_cpp_tol")]
    pub eps_cpp: f64,
    #[serde(default = "default_cpp_tol")]
    pub eps_cpp_axis: f64,
    #[serde(default = "default_cpp_tol")]
    pub eps_ig: f64,
    #[serde(default = "default_axis_guesses")]
    pub n_axis_guesses: usize,
    #[serde(default = "default_circ_guesses")]
    pub n_circ_guesses: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
}

fn default_eps_theta() -> f64 {
    std::f64::consts::FRAC_PI_4
}
fn default_cpp_tol() -> f64 {
    1e-10
}
fn default_axis_guesses() -> usize {
    10
}
fn default_circ_guesses() -> usize {
    8
}
fn default_max_iters() -> usize {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub name: String,
    pub kind: OutputKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OutputKind {
    /// Displacement of an axis endpoint component per step.
    TipDisplacement {
        patch: String,
        end: End,
        component: usize,
    },
    /// Deformed axis samples per step.
    AxisPolyline { patch: String, n_samples: usize },
    /// Contact force per unit initial arc-length along the slave axis
    /// (final step).
    ContactForcePerArclength { pair: usize },
    /// Total contact force per step.
    TotalContactForce { pair: usize },
    /// Average normal gap over the active area per step.
    AverageGap { pair: usize },
    /// Current cross-section area at a fixed axis location per step.
    CrossSectionArea { patch: String, xi1: f64 },
    /// Active-point table with pressures (final step).
    SurfacePressureSamples { pair: usize },
    /// Relative L2 error of the axis height against a reference helix.
    HelixError {
        patch: String,
        amplitude: f64,
        /// Phase index after which the deformed length fixes the helix
        /// period.
        length_after_phase: usize,
    },
    /// Legacy VTK dump of deformed axis polylines (final step).
    VtkDeformed { n_samples: usize },
}

impl Scenario {
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::scenario("serialize", e.to_string()))
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let sc: Scenario =
            toml::from_str(s).map_err(|e| Error::scenario("parse", e.to_string()))?;
        if sc.schema_version != SCHEMA_VERSION {
            return Err(Error::scenario(
                "schema_version",
                format!("unsupported version {}", sc.schema_version),
            ));
        }
        sc.validate()?;
        Ok(sc)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        Self::from_toml_str(&s)
    }

    fn patch_index(&self, name: &str, location: &str) -> Result<usize> {
        self.patches
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(|| {
                Error::scenario(location, format!("unknown patch `{name}`"))
            })
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::scenario("phases", "at least one phase required"));
        }
        if self.patches.is_empty() {
            return Err(Error::scenario("patches", "at least one patch required"));
        }
        for (i, p) in self.patches.iter().enumerate() {
            if self.patches.iter().filter(|q| q.name == p.name).count() > 1 {
                return Err(Error::scenario(
                    format!("patches[{i}].name"),
                    "duplicate patch name",
                ));
            }
            if !(p.material.e > 0.0) {
                return Err(Error::scenario(
                    format!("patches[{i}].material.e"),
                    "Young's modulus must be positive",
                ));
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            self.patch_index(&c.patch, &format!("constraints[{i}].patch"))?;
            if c.ramp.len() != self.phases.len() {
                return Err(Error::scenario(
                    format!("constraints[{i}].ramp"),
                    "one (start, end) factor pair per phase required",
                ));
            }
        }
        for (i, l) in self.loads.iter().enumerate() {
            let name = match &l.kind {
                LoadKind::FollowerEndMoment { patch, .. }
                | LoadKind::BodyForce { patch, .. }
                | LoadKind::EndTraction { patch, .. }
                | LoadKind::LateralTraction { patch, .. } => patch,
            };
            self.patch_index(name, &format!("loads[{i}].patch"))?;
            if l.ramp.len() != self.phases.len() {
                return Err(Error::scenario(
                    format!("loads[{i}].ramp"),
                    "one (start, end) factor pair per phase required",
                ));
            }
        }
        for (i, w) in self.weak_bcs.iter().enumerate() {
            self.patch_index(&w.patch, &format!("weak_bcs[{i}].patch"))?;
            if w.xi2_range.is_none() && w.face.is_none() {
                return Err(Error::scenario(
                    format!("weak_bcs[{i}]"),
                    "either xi2_range or face must be given",
                ));
            }
        }
        for (i, c) in self.contact_pairs.iter().enumerate() {
            let s = self.patch_index(&c.slave, &format!("contact_pairs[{i}].slave"))?;
            let m = self.patch_index(&c.master, &format!("contact_pairs[{i}].master"))?;
            if s == m {
                return Err(Error::scenario(
                    format!("contact_pairs[{i}]"),
                    "slave and master must differ (self-contact unsupported)",
                ));
            }
        }
        Ok(())
    }

    /// Scale all axis meshes by `f` (element counts, and control counts of
    /// periodic axes), keeping at least one element.
    pub fn with_mesh_scale(mut self, f: f64) -> Self {
        if (f - 1.0).abs() < 1e-12 {
            return self;
        }
        for p in &mut self.patches {
            p.n_el = ((p.n_el as f64 * f).round() as usize).max(1);
        }
        self
    }

    /// Resolve the scenario into a solvable model.
    pub fn build_model(&self) -> Result<Model> {
        let mut patches = Vec::new();
        for (i, ps) in self.patches.iter().enumerate() {
            let order = DirectorOrder::new(ps.director_order).map_err(|e| {
                Error::scenario(format!("patches[{i}].director_order"), e.to_string())
            })?;
            let profile = match ps.profile {
                ProfileSpec::Circle { r } => {
                    let (nr, na) = if ps.director_order >= 2 { (8, 16) } else { (4, 8) };
                    CrossSectionProfile::circle(r, ps.profile_degree, ps.profile_mcp, nr, na)?
                }
                ProfileSpec::Rectangle { h, w } => {
                    let n = if ps.director_order >= 2 { 8 } else { 4 };
                    CrossSectionProfile::rectangle(h, w, ps.profile_degree, ps.profile_mcp, n)?
                }
            };
            let axis = match &ps.axis {
                AxisSpec::Line { from, to } => NurbsCurve::<3>::line(
                    Vector3::from(*from),
                    Vector3::from(*to),
                    ps.degree,
                    ps.n_el,
                )?,
                AxisSpec::ClosedCircle {
                    center,
                    radius,
                    ea,
                    eb,
                } => {
                    let c = Vector3::from(*center);
                    let (ea, eb) = (Vector3::from(*ea), Vector3::from(*eb));
                    let r = *radius;
                    let target = move |t: f64| {
                        let th = std::f64::consts::TAU * t;
                        c + ea * (r * th.cos()) + eb * (r * th.sin())
                    };
                    crate::splines::fit_periodic(&target, ps.degree, ps.n_el, ps.n_el * 20)?
                }
                AxisSpec::Explicit { curve } => curve.clone(),
            };
            let seed = match ps.seed {
                SeedSpec::Fixed { v } => DirectorSeed::Fixed(Vector3::from(v)),
                SeedSpec::Toward { center } => DirectorSeed::Toward {
                    center: Vector3::from(center),
                },
            };
            let patch = RodPatch::new(ps.name.clone(), axis, seed, profile, order)?;
            let material = MaterialModel::new(ps.material.model, ps.material.e, ps.material.nu)?;
            patches.push(PatchDef {
                patch,
                material,
                rigid: ps.rigid,
            });
        }

        let mut constraints = Vec::new();
        for c in &self.constraints {
            let ip = self.patch_index(&c.patch, "constraints")?;
            let constraint = match &c.kind {
                ConstraintKind::Fix { ctrl, comps } => Constraint::Fix {
                    patch: ip,
                    ctrl: *ctrl,
                    comps: comps.clone(),
                },
                ConstraintKind::Translate {
                    ctrl,
                    director,
                    mask,
                    vector,
                } => Constraint::Translate {
                    patch: ip,
                    ctrl: *ctrl,
                    director: *director,
                    mask: *mask,
                    vector: *vector,
                },
                ConstraintKind::CircularPath { ctrl, center, angle } => Constraint::CircularPath {
                    patch: ip,
                    ctrl: *ctrl,
                    center: *center,
                    angle: *angle,
                },
                ConstraintKind::RigidTranslate { vector } => Constraint::RigidTranslate {
                    patch: ip,
                    vector: *vector,
                },
            };
            constraints.push(ScheduledConstraint {
                constraint,
                ramp: c.ramp.clone(),
            });
        }

        let mut loads = Vec::new();
        for l in &self.loads {
            let load = match &l.kind {
                LoadKind::FollowerEndMoment {
                    patch,
                    end,
                    magnitude,
                } => Load::FollowerEndMoment {
                    patch: self.patch_index(patch, "loads")?,
                    end: *end,
                    magnitude: *magnitude,
                },
                LoadKind::BodyForce { patch, vector } => Load::BodyForce {
                    patch: self.patch_index(patch, "loads")?,
                    vector: Vector3::from(*vector),
                },
                LoadKind::EndTraction { patch, end, vector } => Load::EndTraction {
                    patch: self.patch_index(patch, "loads")?,
                    end: *end,
                    vector: Vector3::from(*vector),
                },
                LoadKind::LateralTraction { patch, vector } => Load::LateralTraction {
                    patch: self.patch_index(patch, "loads")?,
                    vector: Vector3::from(*vector),
                },
            };
            loads.push(ScheduledLoad {
                load,
                ramp: l.ramp.clone(),
            });
        }

        let mut weak_bcs = Vec::new();
        for w in &self.weak_bcs {
            let ip = self.patch_index(&w.patch, "weak_bcs")?;
            let xi2_range = match (w.xi2_range, w.face) {
                (Some(r), _) => r,
                (None, Some(face)) => patches[ip].patch.profile.face_interval(face)?,
                (None, None) => unreachable!("validated"),
            };
            weak_bcs.push(WeakBc {
                patch: ip,
                xi2_range,
                xi1_range: w.xi1_range,
                eps_d: w.eps_d_scale * self.patches[ip].material.e / UNIT_LENGTH,
                ubar: Vector3::from(w.ubar),
                ramp: w.ramp.clone(),
                n_sub: w.n_sub,
            });
        }

        let mut pairs = Vec::new();
        for c in &self.contact_pairs {
            let slave = self.patch_index(&c.slave, "contact_pairs")?;
            let master = self.patch_index(&c.master, "contact_pairs")?;
            let e_ref = self.patches[slave]
                .material
                .e
                .max(self.patches[master].material.e);
            let r_c = c.r_c.unwrap_or_else(|| {
                3.0 * patches[slave]
                    .patch
                    .profile
                    .shape
                    .max_radius()
                    .max(patches[master].patch.profile.shape.max_radius())
            });
            pairs.push(PairDef {
                slave,
                master,
                params: ContactParams {
                    eps_n: c.eps_n_scale * e_ref / UNIT_LENGTH,
                    r_c,
                    eps_theta: c.eps_theta,
                    n_sub_axial: c.n_sub_axial,
                    m_sub_circ: c.m_sub_circ,
                    eps_cpp: c.eps_cpp,
                    eps_cpp_axis: c.eps_cpp_axis,
                    eps_ig: c.eps_ig,
                    n_axis_guesses: c.n_axis_guesses,
                    n_circ_guesses: c.n_circ_guesses,
                    max_iters: c.max_iters,
                },
            });
        }

        let config = SolveConfig {
            newton_tol_res: self.solver.newton_tol_res,
            newton_tol_energy: self.solver.newton_tol_energy,
            newton_max: self.solver.newton_max,
            activeset_max: self.solver.activeset_max,
        };
        let phases = self.phases.iter().map(|p| Phase { n_steps: p.n_steps }).collect();
        Model::new(patches, constraints, loads, weak_bcs, pairs, config, phases)
    }
}

// ---------------------------------------------------------------------
// Presets. Meshes are half of the largest meshes used in the bundled
// studies unless stated otherwise; `--mesh-scale 2` restores them.
// ---------------------------------------------------------------------

/// Straight beam under opposite follower end moments above a rigid plane.
pub fn preset_bending() -> Scenario {
    bending_scenario(0.25, 2, 20, 10, true)
}

/// Parameterized variant of the bending study (used by tests).
pub fn bending_scenario(
    nu: f64,
    order: usize,
    n_el: usize,
    n_steps: usize,
    with_contact: bool,
) -> Scenario {
    let l = 10.0;
    let (h, w) = (0.2, 1.0);
    let e = 1.2e7;
    let inertia = w * h * h * h / 12.0;
    let alpha = 1.8 * std::f64::consts::PI;
    let moment = alpha * e * inertia / l;
    let one = vec![(0.0, 1.0)];

    let mut patches = vec![PatchSpec {
        name: "beam".into(),
        axis: AxisSpec::Line {
            from: [0.0, 0.0, 0.0],
            to: [l, 0.0, 0.0],
        },
        degree: 3,
        n_el,
        director_order: order,
        seed: SeedSpec::Fixed { v: [0.0, 0.0, 1.0] },
        profile: ProfileSpec::Rectangle { h, w },
        profile_degree: 3,
        profile_mcp: 48,
        material: MaterialSpec {
            model: MaterialKind::NeoHookean,
            e,
            nu,
        },
        rigid: false,
    }];
    let mut contact_pairs = Vec::new();
    if with_contact {
        // rigid flat surface a distance 0.02 L below the beam axis plane
        patches.push(PatchSpec {
            name: "plane".into(),
            axis: AxisSpec::Line {
                from: [-6.0, 0.0, -0.2 - 0.1 - 0.5],
                to: [16.0, 0.0, -0.2 - 0.1 - 0.5],
            },
            degree: 2,
            n_el: 4,
            director_order: 1,
            seed: SeedSpec::Fixed { v: [0.0, 0.0, 1.0] },
            profile: ProfileSpec::Rectangle { h: 1.0, w: 8.0 },
            profile_degree: 3,
            profile_mcp: 64,
            material: MaterialSpec {
                model: MaterialKind::NeoHookean,
                e,
                nu: 0.0,
            },
            rigid: true,
        });
        contact_pairs.push(ContactPairSpec {
            slave: "beam".into(),
            master: "plane".into(),
            eps_n_scale: 10.0,
            r_c: Some(3.0),
            eps_theta: default_eps_theta(),
            n_sub_axial: 10,
            m_sub_circ: 20,
            eps_cpp: default_cpp_tol(),
            eps_cpp_axis: default_cpp_tol(),
            eps_ig: default_cpp_tol(),
            n_axis_guesses: default_axis_guesses(),
            n_circ_guesses: default_circ_guesses(),
            max_iters: default_max_iters(),
        });
    }

    Scenario {
        schema_version: SCHEMA_VERSION,
        name: "bending".into(),
        solver: SolverSpec::default(),
        phases: vec![PhaseSpec { n_steps }],
        patches,
        constraints: vec![
            // hinge at s = 0 plus the director component pinning the roll
            ConstraintSpec {
                patch: "beam".into(),
                ramp: one.clone(),
                kind: ConstraintKind::Fix {
                    ctrl: CtrlSel::End0,
                    comps: vec![(0, 0), (0, 1), (0, 2), (2, 1)],
                },
            },
            // roller at s = L
            ConstraintSpec {
                patch: "beam".into(),
                ramp: one.clone(),
                kind: ConstraintKind::Fix {
                    ctrl: CtrlSel::End1,
                    comps: vec![(0, 1), (0, 2)],
                },
            },
        ],
        loads: vec![
            LoadSpec {
                ramp: one.clone(),
                kind: LoadKind::FollowerEndMoment {
                    patch: "beam".into(),
                    end: End::Start,
                    magnitude: moment,
                },
            },
            LoadSpec {
                ramp: one.clone(),
                kind: LoadKind::FollowerEndMoment {
                    patch: "beam".into(),
                    end: End::End,
                    magnitude: moment,
                },
            },
        ],
        weak_bcs: vec![],
        contact_pairs,
        outputs: vec![
            OutputSpec {
                name: "tip_x".into(),
                kind: OutputKind::TipDisplacement {
                    patch: "beam".into(),
                    end: End::End,
                    component: 0,
                },
            },
            OutputSpec {
                name: "axis".into(),
                kind: OutputKind::AxisPolyline {
                    patch: "beam".into(),
                    n_samples: 101,
                },
            },
        ],
    }
}

/// Elastic ring with a square section pressed onto a rigid plane by a
/// prescribed translation of its inner surface.
pub fn preset_ring() -> Scenario {
    let r_mid = 22.5;
    let e = 2.1e8;
    let gap = 0.01;
    let plane_y = -(25.0 + gap + 1.0);
    Scenario {
        schema_version: SCHEMA_VERSION,
        name: "ring".into(),
        solver: SolverSpec::default(),
        phases: vec![PhaseSpec { n_steps: 8 }],
        patches: vec![
            PatchSpec {
                name: "ring".into(),
                axis: AxisSpec::ClosedCircle {
                    center: [0.0, 0.0, 0.0],
                    radius: r_mid,
                    ea: [1.0, 0.0, 0.0],
                    eb: [0.0, 1.0, 0.0],
                },
                degree: 3,
                n_el: 20,
                director_order: 2,
                seed: SeedSpec::Fixed { v: [0.0, 0.0, 1.0] },
                profile: ProfileSpec::Rectangle { h: 5.0, w: 5.0 },
                profile_degree: 3,
                profile_mcp: 48,
                material: MaterialSpec {
                    model: MaterialKind::NeoHookean,
                    e,
                    nu: 0.3,
                },
                rigid: false,
            },
            PatchSpec {
                name: "plane".into(),
                axis: AxisSpec::Line {
                    from: [-30.0, plane_y, 0.0],
                    to: [30.0, plane_y, 0.0],
                },
                degree: 2,
                n_el: 4,
                director_order: 1,
                seed: SeedSpec::Fixed { v: [0.0, 1.0, 0.0] },
                profile: ProfileSpec::Rectangle { h: 2.0, w: 12.0 },
                profile_degree: 3,
                profile_mcp: 64,
                material: MaterialSpec {
                    model: MaterialKind::NeoHookean,
                    e,
                    nu: 0.0,
                },
                rigid: true,
            },
        ],
        constraints: vec![],
        loads: vec![],
        weak_bcs: vec![WeakBcSpec {
            patch: "ring".into(),
            xi2_range: None,
            face: Some(RectFace::MinusZeta2),
            xi1_range: (0.0, 1.0),
            eps_d_scale: 1.0e7,
            ubar: [0.0, -2.0, 0.0],
            ramp: vec![(0.0, 1.0)],
            n_sub: 8,
        }],
        contact_pairs: vec![ContactPairSpec {
            slave: "ring".into(),
            master: "plane".into(),
            eps_n_scale: 100.0,
            r_c: Some(8.0),
            eps_theta: default_eps_theta(),
            n_sub_axial: 10,
            m_sub_circ: 20,
            eps_cpp: default_cpp_tol(),
            eps_cpp_axis: default_cpp_tol(),
            eps_ig: default_cpp_tol(),
            n_axis_guesses: 20,
            n_circ_guesses: default_circ_guesses(),
            max_iters: default_max_iters(),
        }],
        outputs: vec![
            OutputSpec {
                name: "contact_force".into(),
                kind: OutputKind::TotalContactForce { pair: 0 },
            },
            OutputSpec {
                name: "avg_gap".into(),
                kind: OutputKind::AverageGap { pair: 0 },
            },
            OutputSpec {
                name: "pressure".into(),
                kind: OutputKind::SurfacePressureSamples { pair: 0 },
            },
        ],
    }
}

/// Perpendicular sliding of a rigid cylinder over a clamped elastic one.
pub fn preset_sliding() -> Scenario {
    sliding_scenario(10.0, 20, 16, 50, 1.0)
}

/// Parameterized sliding study: `eps_scale` in multiples of `E/L0`,
/// `n_sub` axial Gauss points per slave element, `n_steps` over the full
/// diagonal travel scaled by `travel` in `[0, 1]`.
pub fn sliding_scenario(
    eps_scale: f64,
    n_sub: usize,
    m_sub: usize,
    n_steps: usize,
    travel: f64,
) -> Scenario {
    let r = 0.1;
    let d = 1e-3;
    let e = 2.1e11;
    let z0 = 2.0 * r + d;
    let mv = -1.5 * travel;
    Scenario {
        schema_version: SCHEMA_VERSION,
        name: "sliding".into(),
        solver: SolverSpec::default(),
        phases: vec![PhaseSpec { n_steps }],
        patches: vec![
            PatchSpec {
                name: "slider".into(),
                axis: AxisSpec::Line {
                    from: [0.0, -3.0, z0],
                    to: [0.0, 3.0, z0],
                },
                degree: 3,
                n_el: 40,
                director_order: 1,
                seed: SeedSpec::Fixed { v: [0.0, 0.0, 1.0] },
                profile: ProfileSpec::Circle { r },
                profile_degree: 3,
                profile_mcp: 48,
                material: MaterialSpec {
                    model: MaterialKind::NeoHookean,
                    e,
                    nu: 0.3,
                },
                rigid: true,
            },
            PatchSpec {
                name: "base".into(),
                axis: AxisSpec::Line {
                    from: [-3.0, 0.0, 0.0],
                    to: [3.0, 0.0, 0.0],
                },
                degree: 3,
                n_el: 80,
                director_order: 1,
                seed: SeedSpec::Fixed { v: [0.0, 0.0, 1.0] },
                profile: ProfileSpec::Circle { r },
                profile_degree: 3,
                profile_mcp: 48,
                material: MaterialSpec {
                    model: MaterialKind::NeoHookean,
                    e,
                    nu: 0.3,
                },
                rigid: false,
            },
        ],
        constraints: vec![
            ConstraintSpec {
                patch: "slider".into(),
                ramp: vec![(0.0, 1.0)],
                kind: ConstraintKind::RigidTranslate {
                    vector: [mv, mv, mv],
                },
            },
            // clamp the whole end cross-sections of the elastic beam
            ConstraintSpec {
                patch: "base".into(),
                ramp: vec![(0.0, 1.0)],
                kind: ConstraintKind::Fix {
                    ctrl: CtrlSel::End0,
                    comps: all_first_order_comps(),
                },
            },
            ConstraintSpec {
                patch: "base".into(),
                ramp: vec![(0.0, 1.0)],
                kind: ConstraintKind::Fix {
                    ctrl: CtrlSel::End1,
                    comps: all_first_order_comps(),
                },
            },
        ],
        loads: vec![],
        weak_bcs: vec![],
        contact_pairs: vec![ContactPairSpec {
            slave: "slider".into(),
            master: "base".into(),
            eps_n_scale: eps_scale,
            r_c: Some(3.0 * r),
            eps_theta: default_eps_theta(),
            n_sub_axial: n_sub,
            m_sub_circ: m_sub,
            eps_cpp: default_cpp_tol(),
            eps_cpp_axis: default_cpp_tol(),
            eps_ig: default_cpp_tol(),
            n_axis_guesses: default_axis_guesses(),
            n_circ_guesses: default_circ_guesses(),
            max_iters: default_max_iters(),
        }],
        outputs: vec![
            OutputSpec {
                name: "master_mid_y".into(),
                kind: OutputKind::AxisPolyline {
                    patch: "base".into(),
                    n_samples: 3,
                },
            },
            OutputSpec {
                name: "avg_gap".into(),
                kind: OutputKind::AverageGap { pair: 0 },
            },
            OutputSpec {
                name: "total_force".into(),
                kind: OutputKind::TotalContactForce { pair: 0 },
            },
            OutputSpec {
                name: "r_n".into(),
                kind: OutputKind::ContactForcePerArclength { pair: 0 },
            },
        ],
    }
}

fn all_first_order_comps() -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for d in 0..3 {
        for c in 0..3 {
            v.push((d, c));
        }
    }
    v
}

/// Two-wire strand twist with a prescribed circular end path.
pub fn preset_twist2() -> Scenario {
    twist2_scenario(0.25, 100.0, 40, 2, 36, 1)
}

pub fn twist2_scenario(
    r: f64,
    eps_scale: f64,
    n_el: usize,
    n_pre: usize,
    n_rot: usize,
    order: usize,
) -> Scenario {
    let l = 10.0;
    let e = 2.1e11;
    let wire = |name: &str, y: f64| PatchSpec {
        name: name.into(),
        axis: AxisSpec::Line {
            from: [0.0, y, 0.0],
            to: [l, y, 0.0],
        },
        degree: 3,
        n_el,
        director_order: order,
        seed: SeedSpec::Fixed { v: [0.0, 1.0, 0.0] },
        profile: ProfileSpec::Circle { r },
        profile_degree: 3,
        profile_mcp: 48,
        material: MaterialSpec {
            model: MaterialKind::NeoHookean,
            e,
            nu: 0.3,
        },
        rigid: false,
    };
    let mut constraints = Vec::new();
    for name in ["wire1", "wire2"] {
        // clamp the axis position at s = 0 and pin the cross-section spin
        constraints.push(ConstraintSpec {
            patch: name.into(),
            ramp: vec![(0.0, 1.0), (1.0, 1.0)],
            kind: ConstraintKind::Fix {
                ctrl: CtrlSel::End0,
                comps: vec![(0, 0), (0, 1), (0, 2), (1, 2), (2, 1)],
            },
        });
        // axial pre-stretch held during the rotation
        constraints.push(ConstraintSpec {
            patch: name.into(),
            ramp: vec![(0.0, 1.0), (1.0, 1.0)],
            kind: ConstraintKind::Translate {
                ctrl: CtrlSel::End1,
                director: 0,
                mask: [true, false, false],
                vector: [0.1, 0.0, 0.0],
            },
        });
        // circular end path about the strand center, applied after the
        // pre-stretch
        constraints.push(ConstraintSpec {
            patch: name.into(),
            ramp: vec![(0.0, 0.0), (0.0, 1.0)],
            kind: ConstraintKind::CircularPath {
                ctrl: CtrlSel::End1,
                center: [r, 0.0],
                angle: std::f64::consts::TAU,
            },
        });
    }
    Scenario {
        schema_version: SCHEMA_VERSION,
        name: "twist2".into(),
        solver: SolverSpec::default(),
        phases: vec![PhaseSpec { n_steps: n_pre }, PhaseSpec { n_steps: n_rot }],
        patches: vec![wire("wire1", 0.0), wire("wire2", 2.0 * r)],
        constraints,
        loads: vec![],
        weak_bcs: vec![],
        contact_pairs: vec![ContactPairSpec {
            slave: "wire1".into(),
            master: "wire2".into(),
            eps_n_scale: eps_scale,
            r_c: Some(3.0 * r),
            eps_theta: default_eps_theta(),
            n_sub_axial: 2,
            m_sub_circ: 12,
            eps_cpp: default_cpp_tol(),
            eps_cpp_axis: default_cpp_tol(),
            eps_ig: default_cpp_tol(),
            n_axis_guesses: default_axis_guesses(),
            n_circ_guesses: default_circ_guesses(),
            max_iters: default_max_iters(),
        }],
        outputs: vec![
            OutputSpec {
                name: "helix_error".into(),
                kind: OutputKind::HelixError {
                    patch: "wire2".into(),
                    amplitude: r,
                    length_after_phase: 0,
                },
            },
            OutputSpec {
                name: "total_force".into(),
                kind: OutputKind::TotalContactForce { pair: 0 },
            },
            OutputSpec {
                name: "axis2".into(),
                kind: OutputKind::AxisPolyline {
                    patch: "wire2".into(),
                    n_samples: 201,
                },
            },
        ],
    }
}

/// Seven-wire strand twist, inner wire as slave against all outer wires
/// plus the ring of outer-outer pairs (twelve pairs total).
pub fn preset_twist7() -> Scenario {
    let r = 0.25;
    let l = 10.0;
    let e = 2.1e11;
    let n_el = 10;
    let mut patches = Vec::new();
    // six outer wires on a circle of radius 2R, then the inner wire (#7)
    for k in 0..6 {
        let th = std::f64::consts::FRAC_PI_3 * k as f64;
        let (y, z) = (2.0 * r * th.cos(), 2.0 * r * th.sin());
        patches.push(PatchSpec {
            name: format!("wire{}", k + 1),
            axis: AxisSpec::Line {
                from: [0.0, y, z],
                to: [l, y, z],
            },
            degree: 3,
            n_el,
            director_order: 1,
            seed: SeedSpec::Fixed { v: [0.0, 1.0, 0.0] },
            profile: ProfileSpec::Circle { r },
            profile_degree: 3,
            profile_mcp: 48,
            material: MaterialSpec {
                model: MaterialKind::NeoHookean,
                e,
                nu: 0.3,
            },
            rigid: false,
        });
    }
    patches.push(PatchSpec {
        name: "wire7".into(),
        axis: AxisSpec::Line {
            from: [0.0, 0.0, 0.0],
            to: [l, 0.0, 0.0],
        },
        degree: 3,
        n_el,
        director_order: 1,
        seed: SeedSpec::Fixed { v: [0.0, 1.0, 0.0] },
        profile: ProfileSpec::Circle { r },
        profile_degree: 3,
        profile_mcp: 48,
        material: MaterialSpec {
            model: MaterialKind::NeoHookean,
            e,
            nu: 0.3,
        },
        rigid: false,
    });

    let mut constraints = Vec::new();
    for k in 1..=7 {
        let name = format!("wire{k}");
        constraints.push(ConstraintSpec {
            patch: name.clone(),
            ramp: vec![(0.0, 1.0), (1.0, 1.0)],
            kind: ConstraintKind::Fix {
                ctrl: CtrlSel::End0,
                comps: vec![(0, 0), (0, 1), (0, 2), (1, 2), (2, 1)],
            },
        });
        constraints.push(ConstraintSpec {
            patch: name.clone(),
            ramp: vec![(0.0, 1.0), (1.0, 1.0)],
            kind: ConstraintKind::Translate {
                ctrl: CtrlSel::End1,
                director: 0,
                mask: [true, false, false],
                vector: [0.1, 0.0, 0.0],
            },
        });
        // all end paths rotate about the strand center; the inner wire
        // sits at the center, so its end effectively stays put
        constraints.push(ConstraintSpec {
            patch: name,
            ramp: vec![(0.0, 0.0), (0.0, 1.0)],
            kind: ConstraintKind::CircularPath {
                ctrl: CtrlSel::End1,
                center: [0.0, 0.0],
                angle: std::f64::consts::TAU,
            },
        });
    }

    // M6S1A pairing: inner wire (7) is the slave of every outer wire, and
    // the outer ring closes on itself
    let mut contact_pairs = Vec::new();
    let mut push_pair = |slave: String, master: String| {
        contact_pairs.push(ContactPairSpec {
            slave,
            master,
            eps_n_scale: 10.0,
            r_c: Some(3.0 * r),
            eps_theta: default_eps_theta(),
            n_sub_axial: 2,
            m_sub_circ: 12,
            eps_cpp: default_cpp_tol(),
            eps_cpp_axis: default_cpp_tol(),
            eps_ig: default_cpp_tol(),
            n_axis_guesses: default_axis_guesses(),
            n_circ_guesses: default_circ_guesses(),
            max_iters: default_max_iters(),
        });
    };
    for k in 1..=6 {
        push_pair("wire7".into(), format!("wire{k}"));
    }
    for k in 1..=6 {
        let next = if k == 6 { 1 } else { k + 1 };
        push_pair(format!("wire{k}"), format!("wire{next}"));
    }

    Scenario {
        schema_version: SCHEMA_VERSION,
        name: "twist7".into(),
        solver: SolverSpec::default(),
        phases: vec![PhaseSpec { n_steps: 2 }, PhaseSpec { n_steps: 36 }],
        patches,
        constraints,
        loads: vec![],
        weak_bcs: vec![],
        contact_pairs,
        outputs: vec![OutputSpec {
            name: "inner_outer_force".into(),
            kind: OutputKind::TotalContactForce { pair: 0 },
        }],
    }
}

/// Look up a built-in preset by name.
pub fn preset(name: &str) -> Option<Scenario> {
    match name {
        "bending" => Some(preset_bending()),
        "ring" => Some(preset_ring()),
        "sliding" => Some(preset_sliding()),
        "twist2" => Some(preset_twist2()),
        "twist7" => Some(preset_twist7()),
        _ => None,
    }
}

pub fn preset_names() -> &'static [&'static str] {
    &["bending", "ring", "sliding", "twist2", "twist7"]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_build_and_round_trip() {
        for name in preset_names() {
            let sc = preset(name).unwrap();
            sc.validate().unwrap();
            let s = sc.to_toml_string().unwrap();
            let back = Scenario::from_toml_str(&s).unwrap();
            assert_eq!(sc, back, "round trip of `{name}`");
            // models resolve
            let model = sc.build_model().unwrap();
            assert!(!model.patches.is_empty());
        }
    }

    #[test]
    fn bending_preset_carries_study_parameters() {
        let sc = preset_bending();
        let beam = &sc.patches[0];
        assert_eq!(beam.material.e, 1.2e7);
        assert_eq!(beam.material.nu, 0.25);
        match &sc.loads[0].kind {
            LoadKind::FollowerEndMoment { magnitude, .. } => {
                let expected = 1.8 * std::f64::consts::PI * 1.2e7 * (1.0 * 0.2f64.powi(3) / 12.0)
                    / 10.0;
                approx::assert_relative_eq!(*magnitude, expected, max_relative = 1e-12);
            }
            other => panic!("unexpected load {other:?}"),
        }
    }

    #[test]
    fn twist7_has_twelve_pairs_in_m6s1a_layout() {
        let sc = preset_twist7();
        assert_eq!(sc.contact_pairs.len(), 12);
        for k in 0..6 {
            assert_eq!(sc.contact_pairs[k].slave, "wire7");
            assert_eq!(sc.contact_pairs[k].master, format!("wire{}", k + 1));
        }
        let ring: Vec<(String, String)> = sc.contact_pairs[6..]
            .iter()
            .map(|p| (p.slave.clone(), p.master.clone()))
            .collect();
        assert_eq!(ring[0], ("wire1".into(), "wire2".into()));
        assert_eq!(ring[5], ("wire6".into(), "wire1".into()));
    }

    #[test]
    fn missing_material_is_a_schema_error() {
        let toml = r#"
schema_version = 1
name = "bad"
[[phases]]
n_steps = 1
[[patches]]
name = "p"
axis = { kind = "line", from = [0,0,0], to = [1,0,0] }
degree = 2
n_el = 2
director_order = 1
seed = { kind = "fixed", v = [0,0,1] }
profile = { kind = "circle", r = 0.1 }
"#;
        let err = Scenario::from_toml_str(toml).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("material"), "error should name the field: {msg}");
    }

    #[test]
    fn unknown_patch_reference_is_located() {
        let mut sc = preset_bending();
        sc.constraints[0].patch = "nope".into();
        let err = sc.validate().unwrap_err();
        assert!(format!("{err}").contains("constraints[0]"));
    }

    #[test]
    fn mesh_scale_rounds_and_clamps() {
        let sc = preset_bending().with_mesh_scale(2.0);
        assert_eq!(sc.patches[0].n_el, 40);
        let sc = preset_bending().with_mesh_scale(0.01);
        assert_eq!(sc.patches[0].n_el, 1);
    }
}
