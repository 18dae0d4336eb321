//! Global assembly, load stepping, the inner Newton-Raphson loop at fixed
//! active set, and the outer active-set loop.
//!
//! Load programs run in phases; every constraint and load carries one
//! `(start, end)` factor pair per phase, linearly ramped over the phase's
//! uniform steps. Strong constraints are eliminated: fixed coefficients
//! are set to their step targets before the first Newton iteration, and
//! the linear solves act on the free partition only.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::contact::{
    self, build_gauss_grid, Body, ContactParams, SurfaceGaussPoint,
};
use crate::element::{
    self, element_ctrls, BoundaryRule, End, PatchContext,
};
use crate::kinematics::RodPatch;
use crate::material::MaterialModel;
use crate::{Error, Result};

/// One rod body in the model.
pub struct PatchDef {
    pub patch: RodPatch,
    pub material: MaterialModel,
    /// Rigid bodies keep every DOF prescribed.
    pub rigid: bool,
}

/// Control-point selector for strong constraints (clamped axes only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CtrlSel {
    End0,
    End1,
    All,
}

/// Strong (eliminated) boundary conditions on control coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Constraint {
    /// Hold selected `(director, component)` coefficients at their initial
    /// values.
    Fix {
        patch: usize,
        ctrl: CtrlSel,
        comps: Vec<(usize, usize)>,
    },
    /// Translate masked components of one director: target = initial +
    /// factor * vector.
    Translate {
        patch: usize,
        ctrl: CtrlSel,
        director: usize,
        mask: [bool; 3],
        vector: [f64; 3],
    },
    /// Order-0 `(e2, e3)` components rotate about `(c2, c3)` by
    /// `factor * angle`.
    CircularPath {
        patch: usize,
        ctrl: CtrlSel,
        center: [f64; 2],
        angle: f64,
    },
    /// Whole-body rigid translation: order-0 blocks translate by
    /// `factor * vector`, every other director component stays fixed.
    RigidTranslate { patch: usize, vector: [f64; 3] },
}

/// Ramp of a constraint or load across the phases: one `(start, end)`
/// factor pair per phase.
pub type Ramp = Vec<(f64, f64)>;

pub struct ScheduledConstraint {
    pub constraint: Constraint,
    pub ramp: Ramp,
}

/// External loads (scaled by their phase factor).
pub enum Load {
    FollowerEndMoment {
        patch: usize,
        end: End,
        magnitude: f64,
    },
    BodyForce {
        patch: usize,
        vector: Vector3<f64>,
    },
    EndTraction {
        patch: usize,
        end: End,
        vector: Vector3<f64>,
    },
    LateralTraction {
        patch: usize,
        vector: Vector3<f64>,
    },
}

pub struct ScheduledLoad {
    pub load: Load,
    pub ramp: Ramp,
}

/// Weak displacement enforcement on a lateral-surface region.
pub struct WeakBc {
    pub patch: usize,
    pub xi2_range: (f64, f64),
    pub xi1_range: (f64, f64),
    pub eps_d: f64,
    /// Prescribed displacement of the region at factor one.
    pub ubar: Vector3<f64>,
    pub ramp: Ramp,
    pub n_sub: usize,
}

/// One contact pair.
pub struct PairDef {
    pub slave: usize,
    pub master: usize,
    pub params: ContactParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveConfig {
    /// Residual tolerance relative to the first-iteration residual.
    pub newton_tol_res: f64,
    /// Energy-norm tolerance relative to the first-iteration energy.
    pub newton_tol_energy: f64,
    pub newton_max: usize,
    pub activeset_max: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            newton_tol_res: 1e-8,
            newton_tol_energy: 1e-12,
            newton_max: 25,
            activeset_max: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Phase {
    pub n_steps: usize,
}

/// Assembled problem definition.
pub struct Model {
    pub patches: Vec<PatchDef>,
    pub contexts: Vec<PatchContext>,
    pub constraints: Vec<ScheduledConstraint>,
    pub loads: Vec<ScheduledLoad>,
    pub weak_bcs: Vec<WeakBc>,
    pub pairs: Vec<PairDef>,
    pub config: SolveConfig,
    pub phases: Vec<Phase>,
}

impl Model {
    pub fn new(
        patches: Vec<PatchDef>,
        constraints: Vec<ScheduledConstraint>,
        loads: Vec<ScheduledLoad>,
        weak_bcs: Vec<WeakBc>,
        pairs: Vec<PairDef>,
        config: SolveConfig,
        phases: Vec<Phase>,
    ) -> Result<Self> {
        let contexts = patches.iter().map(|p| PatchContext::new(&p.patch)).collect();
        let model = Model {
            patches,
            contexts,
            constraints,
            loads,
            weak_bcs,
            pairs,
            config,
            phases,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        for pair in &self.pairs {
            if pair.slave >= self.patches.len() || pair.master >= self.patches.len() {
                return Err(Error::Config("contact pair references unknown patch".into()));
            }
            if pair.slave == pair.master {
                return Err(Error::Config(
                    "self-contact within one patch is unsupported".into(),
                ));
            }
            pair.params.validate()?;
        }
        let n_phases = self.phases.len();
        for sc in &self.constraints {
            if sc.ramp.len() != n_phases {
                return Err(Error::Config("constraint ramp length != phase count".into()));
            }
        }
        for sl in &self.loads {
            if sl.ramp.len() != n_phases {
                return Err(Error::Config("load ramp length != phase count".into()));
            }
        }
        for wb in &self.weak_bcs {
            if wb.ramp.len() != n_phases {
                return Err(Error::Config("weak BC ramp length != phase count".into()));
            }
        }
        Ok(())
    }

    pub fn n_total_steps(&self) -> usize {
        self.phases.iter().map(|p| p.n_steps).sum()
    }
}

/// Global DOF bookkeeping: contiguous blocks per patch, `n_cs` per
/// control point.
pub struct DofMap {
    pub offsets: Vec<usize>,
    pub total: usize,
}

impl DofMap {
    pub fn new(model: &Model) -> Self {
        let mut offsets = Vec::with_capacity(model.patches.len());
        let mut total = 0;
        for p in &model.patches {
            offsets.push(total);
            total += p.patch.n_ctrl() * p.patch.n_cs();
        }
        DofMap { offsets, total }
    }

    pub fn dof(&self, model: &Model, patch: usize, ctrl: usize, comp: usize) -> usize {
        self.offsets[patch] + ctrl * model.patches[patch].patch.n_cs() + comp
    }
}

/// Per-pair contact runtime data.
#[derive(Debug, Clone)]
pub struct PairRuntime {
    pub points: Vec<SurfaceGaussPoint>,
    pub active: Vec<usize>,
}

/// Outcome of the outer active-set loop of one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActiveSetOutcome {
    NoContact,
    Converged { outer_iters: usize },
    CycleResolved { outer_iters: usize },
}

/// Converged record of one load step.
pub struct StepRecord {
    pub step: usize,
    pub phase: usize,
    pub lambda: f64,
    pub coeffs: Vec<DMatrix<f64>>,
    pub contact: Vec<PairRuntime>,
    pub outcome: ActiveSetOutcome,
    pub newton_iters: usize,
    /// Residual norms of the last Newton sequence.
    pub residual_history: Vec<f64>,
    /// Energy norms `|Δqᵀ r|` of the last Newton sequence.
    pub energy_history: Vec<f64>,
}

/// Mutable solve state.
pub struct SolveState {
    pub coeffs: Vec<DMatrix<f64>>,
    pub contact: Vec<PairRuntime>,
    pub step: usize,
}

impl SolveState {
    pub fn new(model: &Model) -> Self {
        SolveState {
            coeffs: model.patches.iter().map(|p| p.patch.q0.clone()).collect(),
            contact: model
                .pairs
                .iter()
                .map(|pair| PairRuntime {
                    points: build_gauss_grid(&model.patches[pair.slave].patch, &pair.params),
                    active: Vec::new(),
                })
                .collect(),
            step: 0,
        }
    }
}

/// Resolved factor of a ramp at `(phase, t_in_phase)`.
fn ramp_factor(ramp: &Ramp, phase: usize, t: f64) -> f64 {
    let (a, b) = ramp[phase];
    a + (b - a) * t
}

/// Strong-constraint targets of one step: map DOF -> prescribed value.
fn bc_targets(
    model: &Model,
    dofs: &DofMap,
    phase: usize,
    t: f64,
) -> Result<BTreeMap<usize, f64>> {
    let mut map = BTreeMap::new();
    let mut put = |dof: usize, v: f64| -> Result<()> {
        if let Some(old) = map.insert(dof, v) {
            if (old - v).abs() > 1e-10 * (1.0 + v.abs()) {
                return Err(Error::Config(format!(
                    "conflicting prescribed values at dof {dof}: {old} vs {v}"
                )));
            }
        }
        Ok(())
    };
    let ctrl_list = |model: &Model, patch: usize, sel: CtrlSel| -> Result<Vec<usize>> {
        let n = model.patches[patch].patch.n_ctrl();
        let periodic = model.patches[patch].patch.axis0.knot_vector().is_periodic();
        match sel {
            CtrlSel::End0 | CtrlSel::End1 if periodic => Err(Error::Config(
                "endpoint constraints are undefined on a closed axis".into(),
            )),
            CtrlSel::End0 => Ok(vec![0]),
            CtrlSel::End1 => Ok(vec![n - 1]),
            CtrlSel::All => Ok((0..n).collect()),
        }
    };

    // rigid patches: everything prescribed (fixed at initial values unless
    // a RigidTranslate moves the order-0 block)
    for (ip, pd) in model.patches.iter().enumerate() {
        if pd.rigid {
            for c in 0..pd.patch.n_ctrl() {
                for k in 0..pd.patch.n_cs() {
                    put(dofs.dof(model, ip, c, k), pd.patch.q0[(c, k)])?;
                }
            }
        }
    }

    for sc in &model.constraints {
        let f = ramp_factor(&sc.ramp, phase, t);
        match &sc.constraint {
            Constraint::Fix { patch, ctrl, comps } => {
                for c in ctrl_list(model, *patch, *ctrl)? {
                    for &(dir, comp) in comps {
                        let k = 3 * dir + comp;
                        put(
                            dofs.dof(model, *patch, c, k),
                            model.patches[*patch].patch.q0[(c, k)],
                        )?;
                    }
                }
            }
            Constraint::Translate {
                patch,
                ctrl,
                director,
                mask,
                vector,
            } => {
                for c in ctrl_list(model, *patch, *ctrl)? {
                    for comp in 0..3 {
                        if mask[comp] {
                            let k = 3 * director + comp;
                            put(
                                dofs.dof(model, *patch, c, k),
                                model.patches[*patch].patch.q0[(c, k)] + f * vector[comp],
                            )?;
                        }
                    }
                }
            }
            Constraint::CircularPath {
                patch,
                ctrl,
                center,
                angle,
            } => {
                let th = f * angle;
                let (cth, sth) = (th.cos(), th.sin());
                for c in ctrl_list(model, *patch, *ctrl)? {
                    let y0 = model.patches[*patch].patch.q0[(c, 1)] - center[0];
                    let z0 = model.patches[*patch].patch.q0[(c, 2)] - center[1];
                    put(
                        dofs.dof(model, *patch, c, 1),
                        center[0] + cth * y0 - sth * z0,
                    )?;
                    put(
                        dofs.dof(model, *patch, c, 2),
                        center[1] + sth * y0 + cth * z0,
                    )?;
                }
            }
            Constraint::RigidTranslate { patch, vector } => {
                let pd = &model.patches[*patch];
                for c in 0..pd.patch.n_ctrl() {
                    for k in 0..pd.patch.n_cs() {
                        let shift = if k < 3 { f * vector[k] } else { 0.0 };
                        put(dofs.dof(model, *patch, c, k), pd.patch.q0[(c, k)] + shift)?;
                    }
                }
            }
        }
    }
    Ok(map)
}

/// Assembled residual and tangent.
pub struct Assembled {
    pub residual: DVector<f64>,
    pub tangent: Option<DMatrix<f64>>,
}

/// Assemble `r = F_int + F_N + F_D - F_ext - F_nc` and the consistent
/// tangent `K = K_int + K_N + K_D - S_nc` at the current state.
pub fn assemble(
    model: &Model,
    dofs: &DofMap,
    state: &SolveState,
    phase: usize,
    t: f64,
    want_k: bool,
) -> Result<Assembled> {
    let n = dofs.total;
    let mut r = DVector::<f64>::zeros(n);
    let mut k = if want_k {
        Some(DMatrix::<f64>::zeros(n, n))
    } else {
        None
    };

    let scatter_vec = |r: &mut DVector<f64>,
                       model: &Model,
                       patch: usize,
                       ctrls: &[usize],
                       f: &DVector<f64>,
                       sign: f64| {
        let n_cs = model.patches[patch].patch.n_cs();
        for (l, &c) in ctrls.iter().enumerate() {
            let base = dofs.dof(model, patch, c, 0);
            for j in 0..n_cs {
                r[base + j] += sign * f[l * n_cs + j];
            }
        }
    };

    for (ip, pd) in model.patches.iter().enumerate() {
        if pd.rigid {
            continue; // fully prescribed: eliminated rows
        }
        let ctx = &model.contexts[ip];
        for e in 0..pd.patch.n_elements() {
            let out =
                element::internal_forces(&pd.patch, ctx, &pd.material, &state.coeffs[ip], e, want_k)?;
            let ctrls = element_ctrls(&pd.patch, e);
            scatter_vec(&mut r, model, ip, &ctrls, &out.f, 1.0);
            if let (Some(kk), Some(ke)) = (k.as_mut(), out.k.as_ref()) {
                scatter_mat(kk, dofs, model, ip, &ctrls, ip, &ctrls, ke, 1.0);
            }
        }
    }

    for sl in &model.loads {
        let f = ramp_factor(&sl.ramp, phase, t);
        if f == 0.0 {
            continue;
        }
        match &sl.load {
            Load::BodyForce { patch, vector } => {
                if model.patches[*patch].rigid {
                    continue;
                }
                let v = vector * f;
                for e in 0..model.patches[*patch].patch.n_elements() {
                    let fe = element::body_force(
                        &model.patches[*patch].patch,
                        &model.contexts[*patch],
                        e,
                        &v,
                    )?;
                    let ctrls = element_ctrls(&model.patches[*patch].patch, e);
                    scatter_vec(&mut r, model, *patch, &ctrls, &fe, -1.0);
                }
            }
            Load::EndTraction { patch, end, vector } => {
                if model.patches[*patch].rigid {
                    continue;
                }
                let (e, fe) = element::end_traction(
                    &model.patches[*patch].patch,
                    &model.contexts[*patch],
                    *end,
                    &(vector * f),
                )?;
                let ctrls = element_ctrls(&model.patches[*patch].patch, e);
                scatter_vec(&mut r, model, *patch, &ctrls, &fe, -1.0);
            }
            Load::LateralTraction { patch, vector } => {
                if model.patches[*patch].rigid {
                    continue;
                }
                let rule = BoundaryRule::full(&model.patches[*patch].patch, 16);
                for e in 0..model.patches[*patch].patch.n_elements() {
                    let fe = element::lateral_traction(
                        &model.patches[*patch].patch,
                        &model.contexts[*patch],
                        &rule,
                        e,
                        &(vector * f),
                    )?;
                    let ctrls = element_ctrls(&model.patches[*patch].patch, e);
                    scatter_vec(&mut r, model, *patch, &ctrls, &fe, -1.0);
                }
            }
            Load::FollowerEndMoment {
                patch,
                end,
                magnitude,
            } => {
                if model.patches[*patch].rigid {
                    continue;
                }
                let (e, fe, se) = element::follower_end_moment(
                    &model.patches[*patch].patch,
                    &model.contexts[*patch],
                    &state.coeffs[*patch],
                    *end,
                    magnitude * f,
                )?;
                let ctrls = element_ctrls(&model.patches[*patch].patch, e);
                scatter_vec(&mut r, model, *patch, &ctrls, &fe, -1.0);
                if let Some(kk) = k.as_mut() {
                    scatter_mat(kk, dofs, model, *patch, &ctrls, *patch, &ctrls, &se, -1.0);
                }
            }
        }
    }

    for wb in &model.weak_bcs {
        if model.patches[wb.patch].rigid {
            continue;
        }
        let f = ramp_factor(&wb.ramp, phase, t);
        let rule = BoundaryRule::over_interval(
            &model.patches[wb.patch].patch,
            wb.xi2_range.0,
            wb.xi2_range.1,
            wb.n_sub,
        );
        let ubar = wb.ubar * f;
        for e in 0..model.patches[wb.patch].patch.n_elements() {
            let (fe, ke) = element::dirichlet_penalty(
                &model.patches[wb.patch].patch,
                &model.contexts[wb.patch],
                &rule,
                e,
                wb.xi1_range,
                &state.coeffs[wb.patch],
                wb.eps_d,
                &ubar,
                want_k,
            )?;
            let ctrls = element_ctrls(&model.patches[wb.patch].patch, e);
            scatter_vec(&mut r, model, wb.patch, &ctrls, &fe, 1.0);
            if let (Some(kk), Some(ke)) = (k.as_mut(), ke.as_ref()) {
                scatter_mat(kk, dofs, model, wb.patch, &ctrls, wb.patch, &ctrls, ke, 1.0);
            }
        }
    }

    for (ipair, pair) in model.pairs.iter().enumerate() {
        let slave = Body {
            patch: &model.patches[pair.slave].patch,
            coeffs: &state.coeffs[pair.slave],
        };
        let master = Body {
            patch: &model.patches[pair.master].patch,
            coeffs: &state.coeffs[pair.master],
        };
        for &i in &state.contact[ipair].active {
            let sp = &state.contact[ipair].points[i];
            let out = contact::point_forces(&slave, &master, sp, &pair.params, want_k)?;
            let n_cs_s = slave.patch.n_cs();
            let n_cs_m = master.patch.n_cs();
            let off = out.slave_ctrls.len() * n_cs_s;
            // slave block
            for (l, &c) in out.slave_ctrls.iter().enumerate() {
                let base = dofs.dof(model, pair.slave, c, 0);
                for j in 0..n_cs_s {
                    r[base + j] += out.f[l * n_cs_s + j];
                }
            }
            for (l, &c) in out.master_ctrls.iter().enumerate() {
                let base = dofs.dof(model, pair.master, c, 0);
                for j in 0..n_cs_m {
                    r[base + j] += out.f[off + l * n_cs_m + j];
                }
            }
            if let (Some(kk), Some(ke)) = (k.as_mut(), out.k.as_ref()) {
                scatter_contact(kk, dofs, model, pair, &out, ke);
            }
        }
    }

    Ok(Assembled {
        residual: r,
        tangent: k,
    })
}

#[allow(clippy::too_many_arguments)]
fn scatter_mat(
    k: &mut DMatrix<f64>,
    dofs: &DofMap,
    model: &Model,
    patch_r: usize,
    ctrls_r: &[usize],
    patch_c: usize,
    ctrls_c: &[usize],
    ke: &DMatrix<f64>,
    sign: f64,
) {
    let n_cs_r = model.patches[patch_r].patch.n_cs();
    let n_cs_c = model.patches[patch_c].patch.n_cs();
    for (lr, &cr) in ctrls_r.iter().enumerate() {
        let br = dofs.dof(model, patch_r, cr, 0);
        for (lc, &cc) in ctrls_c.iter().enumerate() {
            let bc = dofs.dof(model, patch_c, cc, 0);
            for i in 0..n_cs_r {
                for j in 0..n_cs_c {
                    let v = ke[(lr * n_cs_r + i, lc * n_cs_c + j)];
                    if v != 0.0 {
                        k[(br + i, bc + j)] += sign * v;
                    }
                }
            }
        }
    }
}

fn scatter_contact(
    k: &mut DMatrix<f64>,
    dofs: &DofMap,
    model: &Model,
    pair: &PairDef,
    out: &contact::ContactPointForces,
    ke: &DMatrix<f64>,
) {
    let n_cs_s = model.patches[pair.slave].patch.n_cs();
    let n_cs_m = model.patches[pair.master].patch.n_cs();
    let off = out.slave_ctrls.len() * n_cs_s;
    let global_of = |local: usize| -> usize {
        if local < off {
            dofs.dof(model, pair.slave, out.slave_ctrls[local / n_cs_s], local % n_cs_s)
        } else {
            let l = local - off;
            dofs.dof(model, pair.master, out.master_ctrls[l / n_cs_m], l % n_cs_m)
        }
    };
    for i in 0..ke.nrows() {
        let gi = global_of(i);
        for j in 0..ke.ncols() {
            let v = ke[(i, j)];
            if v != 0.0 {
                k[(gi, global_of(j))] += v;
            }
        }
    }
}

/// Write a coefficient update into the per-patch matrices.
fn apply_update(model: &Model, state: &mut SolveState, free: &[usize], du: &DVector<f64>, scale: f64) {
    for (idx, &dof) in free.iter().enumerate() {
        let (patch, local) = locate(model, dof);
        let n_cs = model.patches[patch].patch.n_cs();
        state.coeffs[patch][(local / n_cs, local % n_cs)] += scale * du[idx];
    }
}

fn locate(model: &Model, dof: usize) -> (usize, usize) {
    let mut off = 0;
    for (ip, pd) in model.patches.iter().enumerate() {
        let sz = pd.patch.n_ctrl() * pd.patch.n_cs();
        if dof < off + sz {
            return (ip, dof - off);
        }
        off += sz;
    }
    panic!("dof out of range");
}

/// Newton iteration at a fixed active set. Returns (iterations, residual
/// history, energy history).
fn newton_solve(
    model: &Model,
    dofs: &DofMap,
    state: &mut SolveState,
    free: &[usize],
    phase: usize,
    t: f64,
    first_scale: f64,
    step: usize,
) -> Result<(usize, Vec<f64>, Vec<f64>)> {
    let cfg = &model.config;
    let mut res_hist = Vec::new();
    let mut en_hist = Vec::new();
    let mut res_scale: Option<f64> = None;
    let mut en_scale: Option<f64> = None;
    let mut last_energy = f64::INFINITY;

    for it in 0..cfg.newton_max {
        refresh_projections(model, state)?;
        let asm = assemble(model, dofs, state, phase, t, true)?;
        let r_free = DVector::<f64>::from_iterator(
            free.len(),
            free.iter().map(|&d| asm.residual[d]),
        );
        let rn = r_free.norm();
        if !rn.is_finite() {
            return Err(Error::StepRejected {
                step,
                reason: "residual is not finite".into(),
            });
        }
        res_hist.push(rn);
        let scale = *res_scale.get_or_insert(rn.max(1e-300));
        let res_ok = rn <= cfg.newton_tol_res * scale || rn < 1e-12 * free.len() as f64;
        let en_ok = match en_scale {
            Some(es) => last_energy <= cfg.newton_tol_energy * es || last_energy < 1e-300,
            None => rn < 1e-12 * free.len() as f64, // zero-load step short-circuit
        };
        if res_ok && en_ok {
            return Ok((it, res_hist, en_hist));
        }

        let kt = asm.tangent.as_ref().expect("tangent requested");
        let mut k_red = faer::Mat::<f64>::zeros(free.len(), free.len());
        for (i, &di) in free.iter().enumerate() {
            for (j, &dj) in free.iter().enumerate() {
                k_red[(i, j)] = kt[(di, dj)];
            }
        }
        let rhs = faer::Mat::<f64>::from_fn(free.len(), 1, |i, _| -r_free[i]);
        let lu = k_red.partial_piv_lu();
        use faer::prelude::SpSolver;
        let sol = lu.solve(&rhs);
        let du = DVector::<f64>::from_fn(free.len(), |i, _| sol[(i, 0)]);
        if !du.iter().all(|v| v.is_finite()) {
            return Err(Error::StepRejected {
                step,
                reason: "singular tangent or non-finite increment".into(),
            });
        }
        let energy = du.dot(&r_free).abs();
        en_hist.push(energy);
        en_scale.get_or_insert(energy.max(1e-300));
        last_energy = energy;
        let damp = if it == 0 { first_scale } else { 1.0 };
        apply_update(model, state, free, &du, damp);
    }
    Err(Error::StepRejected {
        step,
        reason: format!(
            "Newton did not converge in {} iterations (last residual {:.3e})",
            cfg.newton_max,
            res_hist.last().copied().unwrap_or(f64::NAN)
        ),
    })
}

fn refresh_projections(model: &Model, state: &mut SolveState) -> Result<()> {
    for (ipair, pair) in model.pairs.iter().enumerate() {
        let slave = Body {
            patch: &model.patches[pair.slave].patch,
            coeffs: &state.coeffs[pair.slave],
        };
        let master = Body {
            patch: &model.patches[pair.master].patch,
            coeffs: &state.coeffs[pair.master],
        };
        contact::refresh_active(&slave, &master, &mut state.contact[ipair].points, &pair.params)?;
    }
    Ok(())
}

/// Full search pass over every pair; returns the new active sets.
fn search_all(model: &Model, state: &mut SolveState) -> Result<Vec<Vec<usize>>> {
    let mut sets = Vec::with_capacity(model.pairs.len());
    for (ipair, pair) in model.pairs.iter().enumerate() {
        let slave = Body {
            patch: &model.patches[pair.slave].patch,
            coeffs: &state.coeffs[pair.slave],
        };
        let master = Body {
            patch: &model.patches[pair.master].patch,
            coeffs: &state.coeffs[pair.master],
        };
        contact::search(&slave, &master, &mut state.contact[ipair].points, &pair.params)?;
        sets.push(contact::update_active_set(&mut state.contact[ipair].points));
    }
    Ok(sets)
}

fn set_active(state: &mut SolveState, sets: &[Vec<usize>]) {
    for (rt, set) in state.contact.iter_mut().zip(sets) {
        for p in rt.points.iter_mut() {
            p.active = false;
        }
        let mut kept = Vec::new();
        for &i in set {
            if rt.points[i].proj.is_some() {
                rt.points[i].active = true;
                kept.push(i);
            }
        }
        rt.active = kept;
    }
}

/// One contact diagnostics row (per point and outer iteration).
#[derive(Debug, Clone)]
pub struct DiagRow {
    pub step: usize,
    pub outer: usize,
    pub pair: usize,
    pub point: usize,
    pub xi1: f64,
    pub xi2: f64,
    pub bar_xi1: f64,
    pub bar_xi2: f64,
    pub g_n: f64,
    pub p_n: f64,
    pub active: bool,
}

/// Optional run hooks.
#[derive(Default)]
pub struct RunOptions {
    /// Collect per-outer-iteration contact diagnostics.
    pub diag: Option<Vec<DiagRow>>,
    /// Write a resumable checkpoint here after every converged step (and
    /// before aborting on a rejected step).
    pub checkpoint: Option<std::path::PathBuf>,
}

/// Run every load step of the schedule, returning the trajectory of
/// converged states (the initial state is record zero).
///
/// Steps at or below `state.step` are skipped, which resumes a run
/// restored from a checkpoint.
pub fn run_load_steps(model: &Model, state: &mut SolveState) -> Result<Vec<StepRecord>> {
    let mut opts = RunOptions::default();
    run_load_steps_opt(model, state, &mut opts)
}

pub fn run_load_steps_opt(
    model: &Model,
    state: &mut SolveState,
    opts: &mut RunOptions,
) -> Result<Vec<StepRecord>> {
    let dofs = DofMap::new(model);
    let mut records = Vec::new();
    records.push(StepRecord {
        step: 0,
        phase: 0,
        lambda: 0.0,
        coeffs: state.coeffs.clone(),
        contact: state.contact.clone(),
        outcome: ActiveSetOutcome::NoContact,
        newton_iters: 0,
        residual_history: Vec::new(),
        energy_history: Vec::new(),
    });

    let total_steps = model.n_total_steps();
    let mut global_step = 0usize;
    for (iphase, phase) in model.phases.iter().enumerate() {
        for k in 1..=phase.n_steps {
            global_step += 1;
            if global_step <= state.step {
                continue; // resumed run
            }
            let t = k as f64 / phase.n_steps as f64;
            let rec = match solve_step(model, &dofs, state, iphase, t, global_step, opts) {
                Ok(rec) => rec,
                Err(err) => {
                    if let Some(path) = &opts.checkpoint {
                        let _ = Checkpoint::capture(state).save(path);
                    }
                    return Err(err);
                }
            };
            state.step = global_step;
            if let Some(path) = &opts.checkpoint {
                Checkpoint::capture(state).save(path)?;
            }
            log::info!(
                "step {global_step}/{total_steps}: newton {} iters, {:?}",
                rec.newton_iters,
                rec.outcome
            );
            records.push(rec);
        }
    }
    Ok(records)
}

fn record_diag(model: &Model, state: &SolveState, step: usize, outer: usize, opts: &mut RunOptions) {
    let Some(diag) = opts.diag.as_mut() else {
        return;
    };
    for (ipair, pair) in model.pairs.iter().enumerate() {
        for (i, p) in state.contact[ipair].points.iter().enumerate() {
            if p.proj.is_none() && !p.active {
                continue;
            }
            let proj = p.proj.unwrap_or([f64::NAN, f64::NAN]);
            diag.push(DiagRow {
                step,
                outer,
                pair: ipair,
                point: i,
                xi1: p.xi1,
                xi2: p.xi2,
                bar_xi1: proj[0],
                bar_xi2: proj[1],
                g_n: p.g_n,
                p_n: if p.active {
                    -pair.params.eps_n * p.g_n
                } else {
                    0.0
                },
                active: p.active,
            });
        }
    }
}

/// One load step: apply the strong constraints, then run the outer
/// active-set loop around Newton solves.
#[allow(clippy::too_many_arguments)]
pub fn solve_step(
    model: &Model,
    dofs: &DofMap,
    state: &mut SolveState,
    phase: usize,
    t: f64,
    step: usize,
    opts: &mut RunOptions,
) -> Result<StepRecord> {
    let targets = bc_targets(model, dofs, phase, t)?;
    // prescribed values are applied exactly before the first iteration
    for (&dof, &v) in &targets {
        let (patch, local) = locate(model, dof);
        let n_cs = model.patches[patch].patch.n_cs();
        state.coeffs[patch][(local / n_cs, local % n_cs)] = v;
    }
    let free: Vec<usize> = (0..dofs.total).filter(|d| !targets.contains_key(d)).collect();

    let has_contact = !model.pairs.is_empty();
    let mut history: Vec<Vec<Vec<usize>>> = vec![state
        .contact
        .iter()
        .map(|c| c.active.clone())
        .collect()];
    let mut cycle_seen = false;
    let mut damp_next = 1.0;
    let mut last_newton = (0usize, Vec::new(), Vec::new());

    let cap = if has_contact {
        model.config.activeset_max
    } else {
        1
    };
    for outer in 0..cap {
        last_newton = newton_solve(model, dofs, state, &free, phase, t, damp_next, step)?;
        damp_next = 1.0;
        if !has_contact {
            return Ok(make_record(state, model, phase, t, step, ActiveSetOutcome::NoContact, last_newton));
        }
        let new_sets = search_all(model, state)?;
        record_diag(model, state, step, outer, opts);
        let current: Vec<Vec<usize>> = state.contact.iter().map(|c| c.active.clone()).collect();
        if new_sets == current {
            set_active(state, &new_sets);
            let outcome = if cycle_seen {
                ActiveSetOutcome::CycleResolved {
                    outer_iters: outer + 1,
                }
            } else {
                ActiveSetOutcome::Converged {
                    outer_iters: outer + 1,
                }
            };
            return Ok(make_record(state, model, phase, t, step, outcome, last_newton));
        }
        // two-cycle detection: the new set equals the set two iterations ago
        if history.len() >= 2 && new_sets == history[history.len() - 2] {
            log::warn!("step {step}: oscillating active set; taking the union with a damped pass");
            cycle_seen = true;
            let union: Vec<Vec<usize>> = new_sets
                .iter()
                .zip(&history[history.len() - 1])
                .map(|(a, b)| {
                    let mut u: Vec<usize> = a.iter().chain(b.iter()).copied().collect();
                    u.sort_unstable();
                    u.dedup();
                    u
                })
                .collect();
            set_active(state, &union);
            damp_next = 0.5;
        } else {
            set_active(state, &new_sets);
        }
        history.push(state.contact.iter().map(|c| c.active.clone()).collect());
    }
    if cycle_seen {
        log::warn!("step {step}: active set still changing at the outer cap; accepting current set");
        return Ok(make_record(
            state,
            model,
            phase,
            t,
            step,
            ActiveSetOutcome::CycleResolved {
                outer_iters: model.config.activeset_max,
            },
            last_newton,
        ));
    }
    Err(Error::StepRejected {
        step,
        reason: format!(
            "active set did not converge within {} outer iterations",
            model.config.activeset_max
        ),
    })
}

fn make_record(
    state: &SolveState,
    _model: &Model,
    phase: usize,
    t: f64,
    step: usize,
    outcome: ActiveSetOutcome,
    newton: (usize, Vec<f64>, Vec<f64>),
) -> StepRecord {
    StepRecord {
        step,
        phase,
        lambda: t,
        coeffs: state.coeffs.clone(),
        contact: state.contact.clone(),
        outcome,
        newton_iters: newton.0,
        residual_history: newton.1,
        energy_history: newton.2,
    }
}

/// Versioned checkpoint capturing the solve state. Coefficients are
/// stored as IEEE-754 bit patterns so resuming is bit-exact.
#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: String,
    pub step: usize,
    pub coeffs: Vec<Vec<u64>>,
    pub coeff_dims: Vec<(usize, usize)>,
    pub active: Vec<Vec<usize>>,
    pub projections: Vec<Vec<Option<[f64; 2]>>>,
}

pub const CHECKPOINT_VERSION: &str = "corda-checkpoint-v1";

impl Checkpoint {
    pub fn capture(state: &SolveState) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION.into(),
            step: state.step,
            coeffs: state
                .coeffs
                .iter()
                .map(|m| m.iter().map(|v| v.to_bits()).collect())
                .collect(),
            coeff_dims: state.coeffs.iter().map(|m| (m.nrows(), m.ncols())).collect(),
            active: state.contact.iter().map(|c| c.active.clone()).collect(),
            projections: state
                .contact
                .iter()
                .map(|c| c.points.iter().map(|p| p.proj).collect())
                .collect(),
        }
    }

    pub fn restore(&self, state: &mut SolveState) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version `{}`",
                self.version
            )));
        }
        if self.coeffs.len() != state.coeffs.len() {
            return Err(Error::Config("checkpoint patch count mismatch".into()));
        }
        for (i, data) in self.coeffs.iter().enumerate() {
            let (nr, nc) = self.coeff_dims[i];
            if (nr, nc) != (state.coeffs[i].nrows(), state.coeffs[i].ncols()) {
                return Err(Error::Config("checkpoint coefficient shape mismatch".into()));
            }
            state.coeffs[i] =
                DMatrix::from_iterator(nr, nc, data.iter().map(|&b| f64::from_bits(b)));
        }
        for (i, set) in self.active.iter().enumerate() {
            for (p, proj) in state.contact[i].points.iter_mut().zip(&self.projections[i]) {
                p.proj = *proj;
                p.active = false;
            }
            for &idx in set {
                state.contact[i].points[idx].active = true;
            }
            state.contact[i].active = set.clone();
        }
        state.step = self.step;
        Ok(())
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        let s = serde_json::to_string(self)
            .map_err(|e| Error::Config(format!("checkpoint serialization: {e}")))?;
        f.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        serde_json::from_str(&s).map_err(|e| Error::Config(format!("checkpoint parse: {e}")))
    }
}
