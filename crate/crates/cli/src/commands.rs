//! The subcommands. Each validates its configuration, runs, and returns a
//! [`Run`] holding the summary, the checks and the staged files; nothing is
//! written until the run has finished.

use std::fmt::Write as _;
use std::io::BufReader;
use std::path::Path;
use std::sync::Arc;

use serde_json::{json, Value};
use thiserror::Error;

use droplet_core::analysis::{
    density_profile, detect_defects, radial_derivative_diagnostic, DefectKind, DensityProfile, Weight,
};
use droplet_core::bounds::{competitor_u0, lower_bound, psi0, upper_bound};
use droplet_core::energy::{
    dirichlet_energy, exterior_energy, reduced_energy, reduced_energy_terms, EnergyReport,
};
use droplet_core::fields::{
    field_from_closed_form, lift_equivariant, project_tangential, read_checkpoint, write_checkpoint, BallGrid3,
    Branch, Checkpoint, CylGrid, Field3, FnField, GridSpec, HalfDiskMesh, Lenient, LiftedPsi, PsiField, Reflected,
    VectorField,
};
use droplet_core::geometry::{reflection_identity_checks, Vec3};
use droplet_core::solvers::{
    perturb_reduced, random_tangential_field, solve_full3d, solve_reduced_nested, SolveParams, SolveTrace,
};
use droplet_core::symmetrization::{make_example_fixture, symmetrize};

use crate::config::{Config, ConfigError, SOLVER_KEYS};
use crate::output::Outputs;
use crate::svg;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

fn runtime<E: std::fmt::Display>(e: E) -> CommandError {
    CommandError::Runtime(e.to_string())
}

#[derive(Debug, Default)]
pub struct Run {
    pub summary: Vec<(String, Value)>,
    pub checks: Vec<(String, bool)>,
    pub outputs: Outputs,
}

impl Run {
    fn put(&mut self, key: &str, v: impl Into<Value>) {
        self.summary.push((key.to_string(), v.into()));
    }

    fn check(&mut self, name: &str, ok: bool) {
        self.checks.push((name.to_string(), ok));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.1)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.summary {
            match v {
                Value::String(t) => {
                    let _ = writeln!(s, "{k}: {t}");
                }
                _ => {
                    let _ = writeln!(s, "{k}: {v}");
                }
            }
        }
        for (k, ok) in &self.checks {
            let _ = writeln!(s, "check.{k}: {}", if *ok { "PASS" } else { "FAIL" });
        }
        s
    }

    pub fn to_json(&self) -> Value {
        let summary: serde_json::Map<String, Value> = self.summary.iter().cloned().collect();
        let checks: serde_json::Map<String, Value> = self.checks.iter().map(|(k, ok)| (k.clone(), Value::Bool(*ok))).collect();
        let files: Vec<&str> = self.outputs.names().collect();
        json!({ "summary": summary, "checks": checks, "passed": self.passed(), "files": files })
    }
}

pub fn allowed_keys(command: &str) -> Vec<&'static str> {
    let mut keys: Vec<&'static str> = match command {
        "solve2d" => vec!["grid.m", "grid.m_start", "bc.branch", "init", "init.amplitude"],
        "solve3d" => vec!["grid.n", "grid.m", "init"],
        "bounds" => vec!["tol.upper", "tol.lower_integral", "tol.gradient_integral"],
        "extend-check" => vec!["grid.m", "check.samples", "check.seed", "grid.n", "input", "tol.identity", "tol.energy_equality"],
        "monotonicity" => vec!["input", "grid.m", "center", "radii.min", "radii.max", "radii.count", "grid.h", "weight"],
        "symmetrize" => vec![
            "grid.n_rho",
            "grid.n_theta",
            "grid.n_z",
            "fixture.amplitude",
            "sym.max_levels",
            "tol.theta",
            "tol.energy_increase",
        ],
        "defects" => vec!["input", "grid.m", "defect.threshold", "defect.scan_radius", "grid.h", "defect.expect"],
        _ => vec![],
    };
    if matches!(command, "solve2d" | "solve3d" | "extend-check" | "monotonicity" | "defects") {
        keys.extend_from_slice(SOLVER_KEYS);
    }
    keys
}

fn solve_params(c: &Config) -> Result<SolveParams, CommandError> {
    let d = SolveParams::default();
    let p = SolveParams {
        max_iters: c.get("solver.max_iters", 20000)?,
        tau: c.get("solver.step", d.tau)?,
        backtrack: c.get("solver.backtrack", d.backtrack)?,
        max_backtracks: c.get("solver.max_backtracks", d.max_backtracks)?,
        armijo: c.get("solver.armijo", d.armijo)?,
        grad_tol: c.get("tol.grad", d.grad_tol)?,
        energy_tol: c.get("tol.energy", d.energy_tol)?,
        energy_window: c.get("solver.energy_window", d.energy_window)?,
        projection_tol: c.get("tol.tangency", d.projection_tol)?,
        seed: c.get("solver.seed", d.seed)?,
    };
    p.validate().map_err(|e| CommandError::Usage(e.to_string()))?;
    Ok(p)
}

fn non_increasing(t: &SolveTrace) -> bool {
    t.rows.windows(2).all(|w| w[1].energy <= w[0].energy)
}

fn checkpoint_bytes(c: &Checkpoint) -> Result<Vec<u8>, CommandError> {
    let mut buf = Vec::new();
    write_checkpoint(c, &mut buf).map_err(runtime)?;
    Ok(buf)
}

/// Reduced minimizer from the competitor ψ₀ by nested iteration up to `m`.
fn reduced_minimizer(m: usize, branch: Branch, params: &SolveParams) -> Result<(PsiField, Vec<(usize, SolveTrace)>), CommandError> {
    let start = 32.min(m);
    let mesh = Arc::new(HalfDiskMesh::new(start).map_err(runtime)?);
    let init = PsiField::from_fn(mesh, psi0, Some(branch)).map_err(runtime)?;
    solve_reduced_nested(init, m, params).map_err(runtime)
}

/// A field to analyse: the competitor, a reduced minimizer or a checkpoint.
pub enum Input {
    U0,
    Psi(PsiField),
    Field(Field3),
}

impl VectorField for Input {
    /// Sampled inputs are pulled radially onto the closed ball, so that
    /// difference stencils straddling the sphere stay defined.
    fn eval(&self, x: Vec3) -> Option<Vec3> {
        let r = x.norm();
        let x = if r > 1.0 { x * ((1.0 - 1e-12) / r) } else { x };
        match self {
            Input::U0 => Some(competitor_u0(x).get()),
            Input::Psi(p) => LiftedPsi(p).eval(x),
            Input::Field(f) => Lenient(f).eval(x),
        }
    }
}

fn load_input(c: &Config, default: &str) -> Result<(Input, String), CommandError> {
    let spec = c.get_str("input", default).to_string();
    let input = match spec.as_str() {
        "u0" => Input::U0,
        "reduced" => {
            let m = c.get("grid.m", 128usize)?;
            Input::Psi(reduced_minimizer(m, Branch::Minus, &solve_params(c)?)?.0)
        }
        path => {
            let file = std::fs::File::open(path).map_err(|e| CommandError::Usage(format!("input `{path}`: {e}")))?;
            match read_checkpoint(BufReader::new(file)).map_err(|e| CommandError::Usage(format!("input `{path}`: {e}")))? {
                Checkpoint::Psi(p) => Input::Psi(p),
                Checkpoint::Field3(f) => Input::Field(f),
            }
        }
    };
    Ok((input, spec))
}

pub fn solve2d(c: &Config) -> Result<Run, CommandError> {
    let m: usize = c.get("grid.m", 128)?;
    let m_start: usize = c.get("grid.m_start", 32)?;
    let branch = Branch::parse(c.get_str("bc.branch", "minus"))
        .ok_or_else(|| CommandError::Usage(format!("bc.branch: `{}`", c.get_str("bc.branch", ""))))?;
    let init_kind = c.get_str("init", "competitor").to_string();
    let amplitude: f64 = c.get("init.amplitude", 0.1)?;
    let params = solve_params(c)?;
    if m < 2 || m_start < 2 {
        return Err(CommandError::Usage("grid.m and grid.m_start must be at least 2".into()));
    }
    let mesh = Arc::new(HalfDiskMesh::new(m_start.min(m)).map_err(runtime)?);
    let mut init = PsiField::from_fn(mesh, psi0, Some(branch)).map_err(runtime)?;
    match init_kind.as_str() {
        "competitor" => {}
        "perturbed" => init = perturb_reduced(&init, amplitude, params.seed),
        other => return Err(CommandError::Usage(format!("init: `{other}`"))),
    }
    let (psi, traces) = solve_reduced_nested(init, m, &params).map_err(runtime)?;
    let (trace_m, trace) = traces.last().expect("at least one level");
    let energy = reduced_energy(&psi);
    let (radial, axial) = reduced_energy_terms(&psi);
    let lo = lower_bound().map_err(runtime)?.exact;
    let hi = droplet_core::bounds::upper_bound_exact();

    let mut run = Run::default();
    run.put("command", "solve2d");
    run.put("m", *trace_m as u64);
    run.put("branch", branch.name());
    run.put("energy", energy);
    run.put("termination", trace.termination.name());
    run.put("iterations", trace.rows.last().map_or(0, |r| r.iter) as u64);
    run.put("lower_bound", lo);
    run.put("upper_bound", hi);
    if let Some(cl) = &trace.clamp {
        run.put("clamped_nodes", cl.nodes as u64);
    }
    run.check("energy_in_bracket", energy >= 0.98 * lo && energy <= 1.02 * hi);
    run.check("energy_non_increasing", traces.iter().all(|(_, t)| non_increasing(t)));

    let mut report = EnergyReport::new(format!("m={trace_m}"), "reduced");
    report.reduced = Some(energy);
    report.terms.insert("reduced_gradient".into(), radial);
    report.terms.insert("reduced_potential".into(), axial);
    run.outputs.add("psi.ckpt", checkpoint_bytes(&Checkpoint::Psi(psi.clone()))?);
    let mut csv = String::from("level_m,");
    csv.push_str(droplet_core::solvers::TRACE_CSV_HEADER);
    csv.push('\n');
    for (lm, t) in &traces {
        for line in t.to_csv().lines().skip(1) {
            let _ = writeln!(csv, "{lm},{line}");
        }
    }
    run.outputs.add("trace.csv", csv);
    run.outputs.add("report.txt", report.to_text());
    let mesh = psi.mesh();
    let cells: Vec<(f64, f64, f64)> = (0..mesh.len())
        .filter(|&k| mesh.cell_fraction(k) > 0.0)
        .map(|k| {
            let (rho, z) = mesh.coords(k);
            (rho, z, psi.values()[k])
        })
        .collect();
    run.outputs.add("psi.svg", svg::heatmap("psi", &cells, mesh.h(), [0.0, 1.0, -1.0, 1.0]));
    Ok(run)
}

pub fn solve3d(c: &Config) -> Result<Run, CommandError> {
    let n: usize = c.get("grid.n", 32)?;
    let m: usize = c.get("grid.m", 64)?;
    let init_kind = c.get_str("init", "lift").to_string();
    let params = solve_params(c)?;
    let grid = Arc::new(BallGrid3::new(GridSpec::ball(n, 1.0)).map_err(runtime)?);
    let init = match init_kind.as_str() {
        "lift" => {
            let (psi, _) = reduced_minimizer(m, Branch::Minus, &params)?;
            project_tangential(&lift_equivariant(&psi, grid.clone()).map_err(runtime)?).map_err(runtime)?.0
        }
        "u0" => {
            let f = field_from_closed_form(&FnField(|x| competitor_u0(x).get()), grid.clone()).map_err(runtime)?;
            project_tangential(&f).map_err(runtime)?.0
        }
        "random" => random_tangential_field(grid.clone(), params.seed).map_err(runtime)?,
        other => return Err(CommandError::Usage(format!("init: `{other}`"))),
    };
    let (f, trace) = solve_full3d(init, &params).map_err(runtime)?;
    let energy = dirichlet_energy(&f);
    let mut run = Run::default();
    run.put("command", "solve3d");
    run.put("n", n as u64);
    run.put("init", init_kind.as_str());
    run.put("initial_energy", trace.initial_energy());
    run.put("energy", energy);
    run.put("termination", trace.termination.name());
    run.put("iterations", trace.rows.last().map_or(0, |r| r.iter) as u64);
    run.put("norm_defect", f.norm_defect());
    run.put("tangency_residual", f.tangency_residual());
    run.check("norm_defect", f.norm_defect() < 1e-9);
    run.check("tangency", trace.max_tangency_residual() <= params.projection_tol);
    run.check("energy_non_increasing", non_increasing(&trace));

    let mut report = EnergyReport::new(format!("n={n}"), "dirichlet-edge-mean");
    report.dirichlet = Some(energy);
    run.outputs.add("field3.ckpt", checkpoint_bytes(&Checkpoint::Field3(f.clone()))?);
    run.outputs.add("trace.csv", trace.to_csv());
    run.outputs.add("report.txt", report.to_text());
    let g = f.grid();
    let h = g.h();
    let cells: Vec<(f64, f64, f64)> = (0..g.len())
        .filter_map(|p| {
            let x = g.position(p);
            (x.x2 > 0.0 && x.x2 < h).then(|| (x.x1, x.x3, f.value(p).x3))
        })
        .collect();
    run.outputs.add("slice.svg", svg::heatmap("u3 on x2 = h/2", &cells, h, [-1.0, 1.0, -1.0, 1.0]));
    Ok(run)
}

pub fn bounds(c: &Config, perturb: bool) -> Result<Run, CommandError> {
    let tol_upper: f64 = c.get("tol.upper", 1e-2)?;
    let tol_lower: f64 = c.get("tol.lower_integral", 1e-10)?;
    let tol_grad: f64 = c.get("tol.gradient_integral", 1e-2)?;
    let ub = upper_bound().map_err(runtime)?;
    let lb = lower_bound().map_err(runtime)?;
    // self-test of the checker: shift every quadrature value by 5%
    let bump = if perturb { 1.05 } else { 1.0 };
    let (uq, gq, lq) = (ub.quadrature * bump, ub.gradient_integral * bump, lb.integral * bump);
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let mut run = Run::default();
    run.put("command", "bounds");
    run.put("upper_exact", format!("{:.15}", ub.exact));
    run.put("upper_quadrature", format!("{uq:.15}"));
    run.put("gradient_integral_exact", format!("{:.15}", ub.gradient_integral_exact));
    run.put("gradient_integral_quadrature", format!("{gq:.15}"));
    run.put("lower_exact", format!("{:.15}", lb.exact));
    run.put("lower_quadrature", format!("{:.15}", lb.quadrature * bump));
    run.put("lower_integral_exact", format!("{:.15}", lb.integral_exact));
    run.put("lower_integral_quadrature", format!("{lq:.15}"));
    run.put("perturbed", perturb);
    run.check("upper_bound", rel(uq, ub.exact) < tol_upper);
    run.check("gradient_integral", rel(gq, ub.gradient_integral_exact) < tol_grad);
    run.check("lower_integral", (lq - lb.integral_exact).abs() < tol_lower);
    run.check("bracket", lb.exact < ub.exact);
    Ok(run)
}

/// `(Ẽ(ũ), E(u; ½<|x|<1), E(u; B₁))` on grids of equal spacing `4/n`.
fn energy_equality<F: VectorField>(u: &F, n: usize) -> Result<(f64, f64, f64), CommandError> {
    let grid = |s| BallGrid3::new(s).map(Arc::new).map_err(runtime);
    let ext = field_from_closed_form(&Reflected(u), grid(GridSpec::annulus(n))?).map_err(runtime)?;
    let shell = field_from_closed_form(u, grid(GridSpec::shell(n / 2, 0.5, 1.0))?).map_err(runtime)?;
    let ball = field_from_closed_form(u, grid(GridSpec::ball(n / 2, 1.0))?).map_err(runtime)?;
    Ok((exterior_energy(&ext).map_err(runtime)?, dirichlet_energy(&shell), dirichlet_energy(&ball)))
}

pub fn extend_check(c: &Config) -> Result<Run, CommandError> {
    let samples: usize = c.get("check.samples", 1000)?;
    let seed: u64 = c.get("check.seed", 1)?;
    let n: usize = c.get("grid.n", 192)?;
    let tol_id: f64 = c.get("tol.identity", 1e-5)?;
    let tol_eq: f64 = c.get("tol.energy_equality", 0.02)?;
    if n < 8 || n % 4 != 0 {
        return Err(CommandError::Usage("grid.n must be a multiple of 4, at least 8".into()));
    }
    let (input, name) = load_input(c, "u0")?;
    let rep = reflection_identity_checks(samples, seed);
    let mut run = Run::default();
    run.put("command", "extend-check");
    run.put("samples", samples as u64);
    run.put("involution", rep.involution);
    run.put("frobenius", rep.frobenius);
    run.put("inversion_det", rep.inversion_det);
    run.put("gradient_norm", rep.gradient_norm);
    run.check("involution", rep.involution < tol_id);
    run.check("frobenius", rep.frobenius < tol_id);
    run.check("inversion_det", rep.inversion_det < tol_id);
    run.check("gradient_norm", rep.gradient_norm < tol_id);
    let (ext, shell, ball) = energy_equality(&input, n)?;
    let rel = (ext - shell).abs() / shell;
    run.put("input", name);
    run.put("exterior_energy", ext);
    run.put("shell_energy", shell);
    run.put("ball_energy", ball);
    run.put("shell_relative_difference", rel);
    run.put("ball_relative_difference", (ext - ball).abs() / ball);
    run.check("exterior_equals_shell_energy", rel < tol_eq);
    let csv = format!(
        "quantity,value\ninvolution,{:e}\nfrobenius,{:e}\ninversion_det,{:e}\ngradient_norm,{:e}\nexterior_energy,{ext:.12e}\nshell_energy,{shell:.12e}\nball_energy,{ball:.12e}\n",
        rep.involution, rep.frobenius, rep.inversion_det, rep.gradient_norm
    );
    run.outputs.add("extend_check.csv", csv);
    Ok(run)
}

fn profile_plot(p: &DensityProfile) -> String {
    let theta: Vec<(f64, f64)> = p.radii.iter().zip(&p.theta).map(|(&r, &t)| (r, t)).collect();
    let f: Vec<(f64, f64)> = p.radii.iter().zip(&p.f).map(|(&r, &v)| (r, v)).collect();
    svg::line_plot("density profile", &[("theta", &theta), ("f", &f)])
}

pub fn monotonicity(c: &Config) -> Result<Run, CommandError> {
    let center = Vec3::from_array(c.get_vec3("center", [0.0, 0.0, 1.0])?);
    let h: f64 = c.get("grid.h", 1.0 / 96.0)?;
    let r_min: f64 = c.get("radii.min", 3.5 * h)?;
    let r_max: f64 = c.get("radii.max", 0.115)?;
    let count: usize = c.get("radii.count", 10)?;
    let weight_s = c.get_str("weight", "inv_square").to_string();
    let weight = Weight::parse(&weight_s).ok_or_else(|| CommandError::Usage(format!("weight: `{weight_s}`")))?;
    if count < 2 || !(r_max > r_min) || r_min < 3.0 * h {
        return Err(CommandError::Usage("radii: need count ≥ 2 and 3·grid.h ≤ radii.min < radii.max".into()));
    }
    let (input, name) = load_input(c, "reduced")?;
    let radii: Vec<f64> = (0..count).map(|k| r_min + (r_max - r_min) * k as f64 / (count - 1) as f64).collect();
    let p = density_profile(&input, center, &radii, h, weight).map_err(runtime)?;
    let mut run = Run::default();
    run.put("command", "monotonicity");
    run.put("input", name);
    run.put("center", vec![center.x1, center.x2, center.x3]);
    run.put("weight", weight_s.as_str());
    match p.fit {
        Some(fit) => {
            run.put("c1", fit.c1);
            run.put("c2", fit.c2);
        }
        None => {
            run.put("c1", Value::Null);
            run.put("c2", Value::Null);
        }
    }
    run.put("residual", p.residual);
    run.check("monotone_fit", p.fit.is_some());
    if (center.norm() - 1.0).abs() < 1e-12 {
        let rad = radial_derivative_diagnostic(&input, center, 0.5 * r_max, r_max, h, weight).map_err(runtime)?;
        run.put("radial_integral", rad.radial_integral);
        run.put("radial_ratio", rad.ratio);
    }
    run.outputs.add("profile.csv", p.to_csv());
    run.outputs.add("profile.txt", p.to_text());
    run.outputs.add("profile.svg", profile_plot(&p));
    Ok(run)
}

pub fn symmetrize_cmd(c: &Config) -> Result<Run, CommandError> {
    let n_rho: usize = c.get("grid.n_rho", 24)?;
    let n_theta: usize = c.get("grid.n_theta", 64)?;
    let n_z: usize = c.get("grid.n_z", 48)?;
    let amp: f64 = c.get("fixture.amplitude", 0.05)?;
    let max_levels: usize = c.get("sym.max_levels", 16)?;
    let tol: f64 = c.get("tol.theta", 1e-6)?;
    let tol_inc: f64 = c.get("tol.energy_increase", 5e-3)?;
    let grid = Arc::new(CylGrid::new(n_rho, n_theta, n_z, 1.0).map_err(|e| CommandError::Usage(e.to_string()))?);
    let fixture = make_example_fixture(grid, amp).map_err(|e| CommandError::Usage(e.to_string()))?;
    let (_, rep) = symmetrize(&fixture, max_levels, tol).map_err(runtime)?;
    let mut run = Run::default();
    run.put("command", "symmetrize");
    run.put("input_t", rep.input.t);
    run.put("input_dirichlet", rep.input.dirichlet);
    run.put("output_dirichlet", rep.output.dirichlet);
    run.put("output_theta_derivative", rep.output.theta_derivative);
    run.put("levels", rep.levels.len() as u64);
    run.put("effective_changes", rep.effective_changes() as u64);
    run.check("fixture_t_zero", rep.input.t.abs() < 1e-6);
    run.check("equivariant_output", rep.output.theta_derivative < tol);
    run.check("energy_not_increased", rep.output.dirichlet <= rep.input.dirichlet * (1.0 + tol_inc));
    run.check("sym_monotone", rep.sym_monotone(1e-12 * rep.input.dirichlet.max(1.0)));
    let mut csv = String::from("level,kept,half_first,half_second,sym_before,sym_after,theta_derivative,max_change\n");
    for l in &rep.levels {
        let _ = writeln!(
            csv,
            "{},{:?},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.3e}",
            l.level, l.kept, l.half_energies[0], l.half_energies[1], l.sym_before, l.sym_after, l.theta_derivative, l.max_change
        );
    }
    run.outputs.add("levels.csv", csv);
    run.outputs.add("symmetrize.txt", rep.to_text());
    Ok(run)
}

pub fn defects(c: &Config) -> Result<Run, CommandError> {
    let threshold: f64 = c.get("defect.threshold", 2.0)?;
    let scan: f64 = c.get("defect.scan_radius", 0.1)?;
    let h: f64 = c.get("grid.h", 1.0 / 32.0)?;
    let expect: Option<usize> = match c.get("defect.expect", -1i64)? {
        v if v < 0 => None,
        v => Some(v as usize),
    };
    let (input, name) = load_input(c, "reduced")?;
    let list = detect_defects(&input, threshold, scan, h).map_err(|e| CommandError::Usage(e.to_string()))?;
    let boundary = list.defects.iter().filter(|d| d.kind == DefectKind::Boundary).count();
    let mut run = Run::default();
    run.put("command", "defects");
    run.put("input", name);
    run.put("count", list.defects.len() as u64);
    run.put("boundary", boundary as u64);
    run.put("interior", (list.defects.len() - boundary) as u64);
    for (k, d) in list.defects.iter().enumerate() {
        run.put(
            &format!("defect.{k}"),
            format!(
                "{:.6} {:.6} {:.6} {} {:.6e}",
                d.location.x1,
                d.location.x2,
                d.location.x3,
                match d.kind {
                    DefectKind::Interior => "interior",
                    DefectKind::Boundary => "boundary",
                },
                d.density
            ),
        );
    }
    if let Some(e) = expect {
        run.check("expected_count", list.defects.len() == e);
    }
    run.outputs.add("defects.csv", list.to_csv());
    run.outputs.add("defects.txt", list.to_text());
    Ok(run)
}

/// Reads and validates the config for `command`, with `--resolution`
/// overriding the grid size.
pub fn load_config(command: &str, path: Option<&Path>, resolution: Option<usize>) -> Result<Config, CommandError> {
    let allowed = allowed_keys(command);
    let mut c = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CommandError::Usage(format!("{}: {e}", p.display())))?;
            Config::parse(&text, &allowed)?
        }
        None => Config::default(),
    };
    if let Some(r) = resolution {
        let key = match command {
            "solve2d" => "grid.m",
            "solve3d" | "extend-check" => "grid.n",
            _ => return Err(CommandError::Usage(format!("--resolution does not apply to {command}"))),
        };
        c.set(key, r);
    }
    Ok(c)
}
