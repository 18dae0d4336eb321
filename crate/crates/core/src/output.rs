//! Post-processing series and file emission.
//!
//! Every requested series maps to one CSV file with a header naming the
//! units; the optional VTK dump writes deformed axis polylines and the
//! active contact points with their pressures in the legacy ASCII format.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, Vector3};

use crate::contact::Body;
use crate::element::End;
use crate::kinematics::{centroid, surface_frame, PiEval, RodPatch};
use crate::quadrature::gauss_on;
use crate::scenario::{OutputKind, OutputSpec, Scenario};
use crate::solver::{DiagRow, Model, PairRuntime, StepRecord};
use crate::{Error, Result};

/// A tabular series ready for CSV emission.
pub struct SeriesData {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl SeriesData {
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.csv", self.name));
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "{}", self.header.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(f, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Initial-surface area weight `w1 w2 J̃` of one slave Gauss point.
fn area_weight(patch: &RodPatch, xi1: f64, xi2: f64, w1: f64, w2: f64) -> Result<f64> {
    let basis = patch.basis_at(xi1, 2)?;
    let (q0, q01, q011) = patch.interp(&patch.q0, &basis, 2);
    let bp = patch.profile.boundary_eval(xi2);
    let pi = PiEval::new(patch.order, bp.zeta[0], bp.zeta[1]);
    let frame0 = surface_frame(&pi, &bp, &q0, &q01, &q011)?;
    Ok(w1 * w2 * frame0.jsurf)
}

/// Total contact force `f_N = Σ p_N w1 w2 J̃` of the active set.
pub fn total_contact_force(
    model: &Model,
    pair: usize,
    rt: &PairRuntime,
    coeffs: &[DMatrix<f64>],
) -> Result<f64> {
    let pd = &model.pairs[pair];
    let patch = &model.patches[pd.slave].patch;
    let _ = coeffs;
    let mut total = 0.0;
    for &i in &rt.active {
        let p = &rt.points[i];
        let w = area_weight(patch, p.xi1, p.xi2, p.w1, p.w2)?;
        total += (-pd.params.eps_n * p.g_n) * w;
    }
    Ok(total)
}

/// Average normal gap over the active area.
pub fn average_gap(model: &Model, pair: usize, rt: &PairRuntime) -> Result<f64> {
    let pd = &model.pairs[pair];
    let patch = &model.patches[pd.slave].patch;
    let mut num = 0.0;
    let mut den = 0.0;
    for &i in &rt.active {
        let p = &rt.points[i];
        let w = area_weight(patch, p.xi1, p.xi2, p.w1, p.w2)?;
        num += p.g_n * w;
        den += w;
    }
    Ok(if den > 0.0 { num / den } else { 0.0 })
}

/// Net contact force vectors (order-0 blocks) of slave and master; their
/// sum vanishing is the discrete action-reaction check.
pub fn contact_force_balance(
    model: &Model,
    pair: usize,
    rt: &PairRuntime,
    coeffs: &[DMatrix<f64>],
) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let pd = &model.pairs[pair];
    let slave = Body {
        patch: &model.patches[pd.slave].patch,
        coeffs: &coeffs[pd.slave],
    };
    let master = Body {
        patch: &model.patches[pd.master].patch,
        coeffs: &coeffs[pd.master],
    };
    let mut fs = Vector3::zeros();
    let mut fm = Vector3::zeros();
    let n_cs_s = slave.patch.n_cs();
    let n_cs_m = master.patch.n_cs();
    for &i in &rt.active {
        let out = contact_point(model, pair, &slave, &master, &rt.points[i])?;
        let off = out.slave_ctrls.len() * n_cs_s;
        for l in 0..out.slave_ctrls.len() {
            for c in 0..3 {
                fs[c] += out.f[l * n_cs_s + c];
            }
        }
        for l in 0..out.master_ctrls.len() {
            for c in 0..3 {
                fm[c] += out.f[off + l * n_cs_m + c];
            }
        }
    }
    Ok((fs, fm))
}

fn contact_point<'a>(
    model: &Model,
    pair: usize,
    slave: &Body<'a>,
    master: &Body<'a>,
    sp: &crate::contact::SurfaceGaussPoint,
) -> Result<crate::contact::ContactPointForces> {
    crate::contact::point_forces(slave, master, sp, &model.pairs[pair].params, false)
}

/// Contact force per unit initial arc-length at every axial station of
/// the slave grid: rows `(xi1, ds, r_N)`.
pub fn force_per_arclength(
    model: &Model,
    pair: usize,
    rt: &PairRuntime,
) -> Result<Vec<(f64, f64, f64)>> {
    let pd = &model.pairs[pair];
    let patch = &model.patches[pd.slave].patch;
    let m = pd.params.m_sub_circ;
    let mut rows = Vec::new();
    for station in rt.points.chunks(m) {
        let xi1 = station[0].xi1;
        let jt = patch.jtilde(xi1)?;
        let mut r_n = 0.0;
        for p in station {
            if p.active {
                let w = area_weight(patch, p.xi1, p.xi2, 1.0, p.w2)?;
                r_n += (-pd.params.eps_n * p.g_n) * w / jt;
            }
        }
        rows.push((xi1, station[0].w1 * jt, r_n));
    }
    Ok(rows)
}

/// Deformed axis length `∫ ‖φ'‖ dξ` from the order-0 coefficient block.
pub fn axis_length(patch: &RodPatch, coeffs: &DMatrix<f64>) -> Result<f64> {
    let kv = patch.axis0.knot_vector();
    let mut len = 0.0;
    for e in 0..kv.n_spans() {
        let (a, b) = kv.span_interval(e);
        for (u, w) in gauss_on(a, b, patch.axis0.degree() + 2) {
            let basis = patch.basis_at(u, 1)?;
            let (_, q1, _) = patch.interp(coeffs, &basis, 1);
            len += Vector3::new(q1[0], q1[1], q1[2]).norm() * w;
        }
    }
    Ok(len)
}

/// Relative L2 error of the axis height `φ3` against the reference helix
/// `amplitude · sin(2π φ1 / period)`, measured in the initial arc-length.
pub fn helix_error(
    patch: &RodPatch,
    coeffs: &DMatrix<f64>,
    amplitude: f64,
    period: f64,
) -> Result<f64> {
    let kv = patch.axis0.knot_vector();
    let mut num = 0.0;
    let mut den = 0.0;
    for e in 0..kv.n_spans() {
        let (a, b) = kv.span_interval(e);
        for (u, w) in gauss_on(a, b, patch.axis0.degree() + 3) {
            let basis = patch.basis_at(u, 0)?;
            let (q, _, _) = patch.interp(coeffs, &basis, 0);
            let jt = patch.jtilde(u)?;
            let reference = amplitude * (std::f64::consts::TAU * q[0] / period).sin();
            num += (q[2] - reference).powi(2) * jt * w;
            den += reference.powi(2) * jt * w;
        }
    }
    if den <= 0.0 {
        return Err(Error::Config("helix reference vanishes".into()));
    }
    Ok((num / den).sqrt())
}

/// Evaluate one requested series over the trajectory.
pub fn evaluate(
    scenario: &Scenario,
    model: &Model,
    records: &[StepRecord],
    spec: &OutputSpec,
) -> Result<SeriesData> {
    let patch_idx = |name: &str| -> Result<usize> {
        scenario
            .patches
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(|| Error::scenario("outputs", format!("unknown patch `{name}`")))
    };
    let total_steps: usize = model.n_total_steps().max(1);
    let lambda_of = |rec: &StepRecord| rec.step as f64 / total_steps as f64;

    let data = match &spec.kind {
        OutputKind::TipDisplacement {
            patch,
            end,
            component,
        } => {
            let ip = patch_idx(patch)?;
            let pd = &model.patches[ip].patch;
            let ctrl = match end {
                End::Start => 0,
                End::End => pd.n_ctrl() - 1,
            };
            let rows = records
                .iter()
                .map(|r| {
                    vec![
                        r.step as f64,
                        lambda_of(r),
                        r.coeffs[ip][(ctrl, *component)] - pd.q0[(ctrl, *component)],
                    ]
                })
                .collect();
            SeriesData {
                name: spec.name.clone(),
                header: vec!["step".into(), "lambda".into(), "displacement_m".into()],
                rows,
            }
        }
        OutputKind::AxisPolyline { patch, n_samples } => {
            let ip = patch_idx(patch)?;
            let pd = &model.patches[ip].patch;
            let mut rows = Vec::new();
            for r in records {
                for k in 0..*n_samples {
                    let u = k as f64 / (*n_samples as f64 - 1.0).max(1.0);
                    let u = u.min(1.0 - 1e-12);
                    let basis = pd.basis_at(u, 0)?;
                    let (q, _, _) = pd.interp(&r.coeffs[ip], &basis, 0);
                    rows.push(vec![
                        r.step as f64,
                        lambda_of(r),
                        u,
                        q[0],
                        q[1],
                        q[2],
                    ]);
                }
            }
            SeriesData {
                name: spec.name.clone(),
                header: vec![
                    "step".into(),
                    "lambda".into(),
                    "xi1".into(),
                    "x_m".into(),
                    "y_m".into(),
                    "z_m".into(),
                ],
                rows,
            }
        }
        OutputKind::TotalContactForce { pair } => {
            let rows = records
                .iter()
                .map(|r| {
                    total_contact_force(model, *pair, &r.contact[*pair], &r.coeffs)
                        .map(|f| vec![r.step as f64, lambda_of(r), f])
                })
                .collect::<Result<_>>()?;
            SeriesData {
                name: spec.name.clone(),
                header: vec!["step".into(), "lambda".into(), "f_n_newton".into()],
                rows,
            }
        }
        OutputKind::AverageGap { pair } => {
            let rows = records
                .iter()
                .map(|r| {
                    average_gap(model, *pair, &r.contact[*pair])
                        .map(|g| vec![r.step as f64, lambda_of(r), g])
                })
                .collect::<Result<_>>()?;
            SeriesData {
                name: spec.name.clone(),
                header: vec!["step".into(), "lambda".into(), "g_avg_m".into()],
                rows,
            }
        }
        OutputKind::ContactForcePerArclength { pair } => {
            let last = records.last().ok_or_else(|| {
                Error::Config("empty trajectory".into())
            })?;
            let rows = force_per_arclength(model, *pair, &last.contact[*pair])?
                .into_iter()
                .map(|(xi1, ds, rn)| {
                    vec![last.step as f64, lambda_of(last), xi1, ds, rn]
                })
                .collect();
            SeriesData {
                name: spec.name.clone(),
                header: vec![
                    "step".into(),
                    "lambda".into(),
                    "xi1".into(),
                    "ds_m".into(),
                    "r_n_newton_per_m".into(),
                ],
                rows,
            }
        }
        OutputKind::CrossSectionArea { patch, xi1 } => {
            let ip = patch_idx(patch)?;
            let rows = records
                .iter()
                .map(|r| {
                    centroid(&model.patches[ip].patch, &r.coeffs[ip], *xi1)
                        .map(|(_, a)| vec![r.step as f64, lambda_of(r), a])
                })
                .collect::<Result<_>>()?;
            SeriesData {
                name: spec.name.clone(),
                header: vec!["step".into(), "lambda".into(), "area_m2".into()],
                rows,
            }
        }
        OutputKind::SurfacePressureSamples { pair } => {
            let last = records.last().ok_or_else(|| {
                Error::Config("empty trajectory".into())
            })?;
            let rt = &last.contact[*pair];
            let pd = &model.pairs[*pair];
            let mut rows = Vec::new();
            for (i, p) in rt.points.iter().enumerate() {
                let proj = p.proj.unwrap_or([f64::NAN, f64::NAN]);
                rows.push(vec![
                    i as f64,
                    p.xi1,
                    p.xi2,
                    proj[0],
                    proj[1],
                    p.g_n,
                    if p.active { -pd.params.eps_n * p.g_n } else { 0.0 },
                    p.active as usize as f64,
                ]);
            }
            SeriesData {
                name: spec.name.clone(),
                header: vec![
                    "point".into(),
                    "xi1".into(),
                    "xi2".into(),
                    "bar_xi1".into(),
                    "bar_xi2".into(),
                    "g_n_m".into(),
                    "p_n_pa".into(),
                    "active".into(),
                ],
                rows,
            }
        }
        OutputKind::HelixError {
            patch,
            amplitude,
            length_after_phase,
        } => {
            let ip = patch_idx(patch)?;
            let ref_rec = records
                .iter()
                .filter(|r| r.phase <= *length_after_phase)
                .last()
                .ok_or_else(|| Error::Config("no reference record for helix length".into()))?;
            let period = axis_length(&model.patches[ip].patch, &ref_rec.coeffs[ip])?;
            let mut rows = Vec::new();
            for r in records.iter().filter(|r| r.phase > *length_after_phase) {
                let e = helix_error(&model.patches[ip].patch, &r.coeffs[ip], *amplitude, period)?;
                rows.push(vec![r.step as f64, lambda_of(r), e]);
            }
            SeriesData {
                name: spec.name.clone(),
                header: vec!["step".into(), "lambda".into(), "e_phi3".into()],
                rows,
            }
        }
        OutputKind::VtkDeformed { n_samples } => {
            // handled by `write_vtk`; emit an empty marker series here
            let _ = n_samples;
            SeriesData {
                name: spec.name.clone(),
                header: vec!["see_vtk_file".into()],
                rows: vec![],
            }
        }
    };
    Ok(data)
}

/// Emit every requested series (and VTK dumps) into `dir`.
pub fn emit_outputs(
    scenario: &Scenario,
    model: &Model,
    records: &[StepRecord],
    dir: &Path,
) -> Result<()> {
    for spec in &scenario.outputs {
        if let OutputKind::VtkDeformed { n_samples } = &spec.kind {
            let last = records
                .last()
                .ok_or_else(|| Error::Config("empty trajectory".into()))?;
            write_vtk(model, last, *n_samples, &dir.join(format!("{}.vtk", spec.name)))?;
            continue;
        }
        evaluate(scenario, model, records, spec)?.write_csv(dir)?;
    }
    Ok(())
}

/// Legacy-VTK dump: deformed axis polylines of every patch plus active
/// contact points carrying their pressure.
pub fn write_vtk(
    model: &Model,
    record: &StepRecord,
    n_samples: usize,
    path: &Path,
) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut pts: Vec<Vector3<f64>> = Vec::new();
    let mut pressures: Vec<f64> = Vec::new();
    let mut lines: Vec<Vec<usize>> = Vec::new();
    for (ip, pd) in model.patches.iter().enumerate() {
        let mut chain = Vec::new();
        for k in 0..n_samples {
            let u = (k as f64 / (n_samples as f64 - 1.0)).min(1.0 - 1e-12);
            let basis = pd.patch.basis_at(u, 0)?;
            let (q, _, _) = pd.patch.interp(&record.coeffs[ip], &basis, 0);
            chain.push(pts.len());
            pts.push(Vector3::new(q[0], q[1], q[2]));
            pressures.push(0.0);
        }
        lines.push(chain);
    }
    let mut n_vertices = 0;
    for (ipair, pair) in model.pairs.iter().enumerate() {
        let rt = &record.contact[ipair];
        let slave = Body {
            patch: &model.patches[pair.slave].patch,
            coeffs: &record.coeffs[pair.slave],
        };
        for &i in &rt.active {
            let p = &rt.points[i];
            pts.push(slave.surface_point(p.xi1, p.xi2)?);
            pressures.push(-pair.params.eps_n * p.g_n);
            n_vertices += 1;
        }
    }

    let mut f = std::fs::File::create(path)?;
    writeln!(f, "# vtk DataFile Version 3.0")?;
    writeln!(f, "deformed rod axes and active contact points")?;
    writeln!(f, "ASCII")?;
    writeln!(f, "DATASET POLYDATA")?;
    writeln!(f, "POINTS {} double", pts.len())?;
    for p in &pts {
        writeln!(f, "{} {} {}", p[0], p[1], p[2])?;
    }
    let line_size: usize = lines.iter().map(|l| l.len() + 1).sum();
    writeln!(f, "LINES {} {}", lines.len(), line_size)?;
    for l in &lines {
        let ids: Vec<String> = l.iter().map(|i| i.to_string()).collect();
        writeln!(f, "{} {}", l.len(), ids.join(" "))?;
    }
    if n_vertices > 0 {
        writeln!(f, "VERTICES {} {}", n_vertices, 2 * n_vertices)?;
        let first = pts.len() - n_vertices;
        for i in 0..n_vertices {
            writeln!(f, "1 {}", first + i)?;
        }
    }
    writeln!(f, "POINT_DATA {}", pts.len())?;
    writeln!(f, "SCALARS pressure double 1")?;
    writeln!(f, "LOOKUP_TABLE default")?;
    for p in &pressures {
        writeln!(f, "{p}")?;
    }
    Ok(())
}

/// Contact diagnostics CSV (one row per point and outer iteration).
pub fn write_diag_csv(rows: &[DiagRow], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::fs::File::create(path)?;
    writeln!(
        f,
        "step,outer_iteration,pair,point,xi1,xi2,bar_xi1,bar_xi2,g_n_m,p_n_pa,active"
    )?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{}",
            r.step,
            r.outer,
            r.pair,
            r.point,
            r.xi1,
            r.xi2,
            r.bar_xi1,
            r.bar_xi2,
            r.g_n,
            r.p_n,
            r.active as u8
        )?;
    }
    Ok(())
}
