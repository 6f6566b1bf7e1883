//! Command-line front end: loads a cascade description, runs one analysis and
//! writes `report.json`, CSV series and, for `balance`, `balanced.json`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use nalgebra::{Complex, DMatrix};
use serde_json::json;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::balancing::{balance_cascade, h_lambda, probe_one_mode, OneModeBalanceProblem};
use crate::cascade::{pr_residuals, transfer_eval, CascadeModel};
use crate::error::{Error, Result};
use crate::reference;
use crate::report::{fmt_matrix, matrix_json, Check, CsvSeries, Provenance, ReportBundle, Table};
use crate::sensitivity::{
    covariance_derivatives, fisher_sensitivity, gradient_fd_oracle, monte_carlo_variance, psi_k, purity_gradients,
    purity_gradients_recursive, sensitivity_index, GradientSet, UncertaintyModel,
};
use crate::spec_file::{load_spec, parse_spec, to_document, CascadeSpec, DEFAULT_EPSILON, EXAMPLE_SPEC};
use crate::steadystate::{invariant_covariance_direct, invariant_covariance_recursive, steady_state};
use crate::ticascade::{covariance_trace_bound, TIModel};

pub const DEFAULT_TOL_RESIDUAL: f64 = 1e-9;
pub const DEFAULT_FD_STEP: f64 = 1e-5;
pub const DEFAULT_SAMPLES: usize = 100_000;
pub const DEFAULT_SEED: u64 = 7;
pub const DEFAULT_KMAX: usize = 10;
pub const BALANCE_PROBES: usize = 1000;

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Validate,
    Covariance,
    Purity,
    Gradients,
    Sensitivity,
    Balance,
    McCheck,
    TiBounds,
    ReproducePaper,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Covariance => "covariance",
            Command::Purity => "purity",
            Command::Gradients => "gradients",
            Command::Sensitivity => "sensitivity",
            Command::Balance => "balance",
            Command::McCheck => "mc-check",
            Command::TiBounds => "ti-bounds",
            Command::ReproducePaper => "reproduce-paper",
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Clone, Debug, Parser)]
#[command(name = "qcascade", version, about = "Purity analysis and balancing of cascaded quantum oscillators")]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    /// Cascade description (JSON). Optional for reproduce-paper, which defaults to the bundled example.
    pub spec: Option<PathBuf>,
    /// Relative residual tolerance for solver self-checks [default: 1e-9]
    #[arg(long)]
    pub tol_residual: Option<f64>,
    /// Central finite-difference step [default: 1e-5]
    #[arg(long)]
    pub fd_step: Option<f64>,
    /// Monte Carlo sample count [default: 100000]
    #[arg(long)]
    pub samples: Option<usize>,
    /// Monte Carlo seed [default: 7]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Perturbation scale ε [default: 1e-6]
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Cascade depth for ti-bounds [default: 10]
    #[arg(long)]
    pub kmax: Option<usize>,
    /// Output directory
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
}

/// Effective settings after merging flags, spec options and defaults.
#[derive(Clone, Debug)]
struct Settings {
    tol_residual: f64,
    fd_step: f64,
    samples: usize,
    seed: u64,
    epsilon: f64,
    kmax: usize,
}

fn settings(args: &Args, spec: &CascadeSpec) -> Result<Settings> {
    let o = &spec.options;
    let s = Settings {
        tol_residual: args.tol_residual.or(o.tol_residual).unwrap_or(DEFAULT_TOL_RESIDUAL),
        fd_step: args.fd_step.or(o.fd_step).unwrap_or(DEFAULT_FD_STEP),
        samples: args.samples.or(o.samples).unwrap_or(DEFAULT_SAMPLES),
        seed: args.seed.or(o.seed).unwrap_or(DEFAULT_SEED),
        epsilon: args.epsilon.or(spec.uncertainty.as_ref().map(|u| u.epsilon)).unwrap_or(DEFAULT_EPSILON),
        kmax: args.kmax.or(o.kmax).unwrap_or(DEFAULT_KMAX),
    };
    for (name, v) in [("tol-residual", s.tol_residual), ("fd-step", s.fd_step), ("epsilon", s.epsilon)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!("--{name} must be positive, got {v}")));
        }
    }
    Ok(s)
}

fn provenance(spec: &CascadeSpec, s: &Settings, cmd: Command) -> Provenance {
    let mut tolerances = BTreeMap::new();
    tolerances.insert("tol_residual".to_string(), s.tol_residual);
    tolerances.insert("fd_step".to_string(), s.fd_step);
    tolerances.insert("epsilon".to_string(), s.epsilon);
    let mc = cmd == Command::McCheck;
    if cmd == Command::TiBounds {
        tolerances.insert("kmax".to_string(), s.kmax as f64);
    }
    Provenance {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        input_sha256: spec.input_sha256.clone(),
        tolerances,
        seed: mc.then_some(s.seed),
        samples: mc.then_some(s.samples),
        defaults_applied: spec.defaults_applied.clone(),
    }
}

fn uncertainty(spec: &CascadeSpec, s: &Settings) -> Result<UncertaintyModel> {
    let mut u = spec.uncertainty.clone().ok_or_else(|| Error::Schema {
        path: "uncertainty".into(),
        message: "required for this command".into(),
    })?;
    u.epsilon = s.epsilon;
    Ok(u)
}

fn bounds(spec: &CascadeSpec) -> Result<Vec<(f64, f64)>> {
    spec.bounds().ok_or_else(|| Error::Schema {
        path: "uncertainty".into(),
        message: "bounds {a, b} are required for every oscillator".into(),
    })
}

fn rel_diff(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    (x - y).norm() / y.norm().max(f64::MIN_POSITIVE)
}

fn f4(x: f64) -> String {
    format!("{x:.4}")
}

fn table(title: &str, header: &[&str], rows: Vec<Vec<String>>) -> Table {
    Table {
        title: title.to_string(),
        header: header.iter().map(|s| s.to_string()).collect(),
        rows,
    }
}

fn gradient_json(g: &GradientSet) -> serde_json::Value {
    json!({
        "rho": g.rho.iter().map(|r| matrix_json(r.as_matrix())).collect::<Vec<_>>(),
        "mu": g.mu.iter().map(matrix_json).collect::<Vec<_>>(),
    })
}

fn gradient_table(g: &GradientSet) -> Table {
    let rows = (0..g.len())
        .map(|k| vec![(k + 1).to_string(), fmt_matrix(g.rho[k].as_matrix()), fmt_matrix(&g.mu[k])])
        .collect();
    table("purity gradients", &["k", "rho_k", "mu_k"], rows)
}

fn cmd_validate(r: &mut ReportBundle, c: &CascadeModel, s: &Settings) -> Result<()> {
    let mut rows = vec![];
    let mut per = vec![];
    for k in 0..c.len() {
        let h = c.hurwitz_checks()[k];
        let (pa, pb) = pr_residuals(c.realization(k), c.oscillator(k).theta(), c.ito());
        let pr = pa.max(pb);
        r.checks.push(Check::flag(format!("oscillator {} Hurwitz (max real part)", k + 1), h.max_real, h.hurwitz));
        r.checks.push(Check::at_most(format!("oscillator {} PR residual", k + 1), pr, s.tol_residual));
        rows.push(vec![(k + 1).to_string(), f4(h.max_real), h.hurwitz.to_string(), format!("{pr:.1e}")]);
        per.push(json!({"max_real": h.max_real, "hurwitz": h.hurwitz, "pr_residual": pr}));
    }
    r.tables.push(table("oscillators", &["k", "max Re eig A_k", "Hurwitz", "PR residual"], rows));
    r.insert("oscillators", per);
    let cons = c.consistency_residual();
    r.checks.push(Check::at_most("composite realisation consistency", cons, s.tol_residual));
    r.insert("consistency_residual", cons);
    if c.require_hurwitz().is_ok() {
        let st = steady_state(c)?;
        let tol = 1e-9 * st.p.norm();
        r.checks.push(Check::at_most("Lyapunov residual", st.residual, s.tol_residual));
        r.checks.push(Check::flag("P + i Theta positive semidefinite (min eigenvalue)", st.psd_margin, st.psd_margin >= -tol));
        r.insert("lyapunov_residual", st.residual);
        r.insert("psd_margin", st.psd_margin);
    }
    Ok(())
}

fn cmd_covariance(r: &mut ReportBundle, c: &CascadeModel) -> Result<()> {
    let p1 = invariant_covariance_direct(c)?;
    let p2 = invariant_covariance_recursive(c)?;
    let d = rel_diff(p2.as_matrix(), p1.as_matrix());
    let st = steady_state(c)?;
    r.checks.push(Check::at_most("direct vs recursive covariance (relative)", d, 1e-10));
    r.insert("covariance", matrix_json(p1.as_matrix()));
    r.insert("covariance_recursive", matrix_json(p2.as_matrix()));
    r.insert("route_relative_difference", d);
    r.insert("schur_complements", st.schur.pi_k.iter().map(|x| matrix_json(x.as_matrix())).collect::<Vec<_>>());
    let mut rows = vec![];
    for j in 0..c.len() {
        for k in 0..=j {
            let blk = p1.view((c.range(j).start, c.range(k).start), (c.range(j).len(), c.range(k).len())).clone_owned();
            rows.push(vec![format!("P_{}{}", j + 1, k + 1), fmt_matrix(&blk)]);
        }
    }
    r.tables.push(table("covariance blocks", &["block", "value"], rows));
    let rows = st.schur.pi_k.iter().enumerate().map(|(k, x)| vec![(k + 1).to_string(), fmt_matrix(x.as_matrix())]).collect();
    r.tables.push(table("Schur complements", &["k", "Pi_k"], rows));
    Ok(())
}

fn cmd_purity(r: &mut ReportBundle, c: &CascadeModel) -> Result<()> {
    let st = steady_state(c)?;
    let pu = &st.purity;
    let sum: f64 = pu.v_k.iter().sum();
    r.checks.push(Check::at_most("sum of V_k vs ln det P", (sum - pu.logdet).abs(), 1e-10 * (1.0 + pu.logdet.abs())));
    r.insert("purity", pu.purity);
    r.insert("logdet", pu.logdet);
    r.insert("v_k", &pu.v_k);
    let mut rows = vec![vec!["purity".into(), format!("{:.4e}", pu.purity)], vec!["V = ln det P".into(), f4(pu.logdet)]];
    for (k, v) in pu.v_k.iter().enumerate() {
        rows.push(vec![format!("V_{}", k + 1), f4(*v)]);
    }
    r.tables.push(table("purity", &["quantity", "value"], rows));
    Ok(())
}

fn cmd_gradients(r: &mut ReportBundle, c: &CascadeModel, s: &Settings) -> Result<()> {
    let g = purity_gradients(c)?;
    let gr = purity_gradients_recursive(c)?;
    let fd = gradient_fd_oracle(c, s.fd_step)?;
    let dr = gr.relative_distance(&g);
    let df = fd.relative_distance(&g);
    r.checks.push(Check::at_most("direct vs recursive gradients (relative)", dr, 1e-8));
    r.checks.push(Check::at_most("direct vs finite differences (relative)", df, 1e-6));
    r.insert("gradients", gradient_json(&g));
    r.insert("gradients_recursive", gradient_json(&gr));
    r.insert("route_relative_difference", dr);
    r.insert("fd_relative_difference", df);
    r.tables.push(gradient_table(&g));
    r.tables.push(table(
        "route agreement",
        &["comparison", "relative difference"],
        vec![
            vec!["recursive".into(), format!("{dr:.2e}")],
            vec![format!("finite differences, h = {:e}", s.fd_step), format!("{df:.2e}")],
        ],
    ));
    Ok(())
}

fn cmd_sensitivity(r: &mut ReportBundle, c: &CascadeModel, spec: &CascadeSpec, s: &Settings) -> Result<()> {
    let u = uncertainty(spec, s)?;
    let g = purity_gradients(c)?;
    let rep = sensitivity_index(&g, &u)?;
    let st = steady_state(c)?;
    let derivs = covariance_derivatives(c, &st.p)?;
    let sigmas = (0..c.len())
        .map(|k| u.blocks[k].covariance(c.oscillator(k).n(), c.oscillator(k).channels()))
        .collect::<Result<Vec<_>>>()?;
    let fisher = fisher_sensitivity(&st.p, &derivs, &sigmas)?;
    let psi_i: Option<Vec<f64>> = spec.bounds().map(|b| {
        b.iter()
            .enumerate()
            .map(|(k, &(a, bb))| psi_k(g.rho[k].as_matrix(), &g.mu[k], a, bb, &DMatrix::identity(g.rho[k].order(), g.rho[k].order())))
            .collect()
    });
    let n = c.state_dim() as f64;
    r.checks.push(Check::at_most("Z - n Z_fisher", rep.z - n * fisher.z_fisher, 1e-9 * rep.z.abs().max(1.0)));
    r.checks.push(Check::at_most(
        "Z from covariance derivatives vs gradients (relative)",
        (fisher.z - rep.z).abs() / rep.z.abs().max(f64::MIN_POSITIVE),
        1e-6,
    ));
    r.insert("z", rep.z);
    r.insert("z_k", &rep.z_k);
    r.insert("z_fisher", fisher.z_fisher);
    r.insert("z_fisher_k", &fisher.z_fisher_k);
    r.insert("epsilon", u.epsilon);
    r.insert("psi_identity", &psi_i);
    let mut rows = vec![];
    for k in 0..c.len() {
        let mut row = vec![(k + 1).to_string(), f4(rep.z_k[k]), f4(fisher.z_fisher_k[k])];
        row.push(psi_i.as_ref().map_or("-".into(), |p| f4(p[k])));
        rows.push(row);
    }
    rows.push(vec!["total".into(), f4(rep.z), f4(fisher.z_fisher), psi_i.as_ref().map_or("-".into(), |p| f4(p.iter().sum()))]);
    r.tables.push(table("sensitivity", &["k", "Z_k", "Z_fisher_k", "Psi_k(I)"], rows));
    Ok(())
}

fn lambda_curve(p: &OneModeBalanceProblem, k: usize) -> Result<CsvSeries> {
    let ti = crate::matcore::spd_inv_sqrt(&p.tau)?;
    let rt = p.rho.congruence(ti.as_matrix());
    let ev = crate::matcore::symmetric_eigenvalues(&rt)?;
    let rs: Vec<f64> = ev.iter().cloned().collect();
    Ok(lambda_curve_series(&rs, &format!("lambda_curve_{}.csv", k + 1)))
}

/// `(λ, h(λ))` on a log grid, for plotting the multiplier equation.
pub fn lambda_curve_series(rs: &[f64], file_name: &str) -> CsvSeries {
    let rows = (0..=200)
        .map(|i| {
            let lam = 10f64.powf(-3.0 + 6.0 * i as f64 / 200.0);
            vec![lam, h_lambda(lam, rs)]
        })
        .collect();
    CsvSeries {
        file_name: file_name.to_string(),
        header: vec!["lambda".into(), "h".into()],
        rows,
    }
}

fn cmd_balance(r: &mut ReportBundle, c: &CascadeModel, spec: &CascadeSpec, s: &Settings) -> Result<()> {
    let b = bounds(spec)?;
    let g = purity_gradients(c)?;
    let bal = balance_cascade(c, &g, &b)?;
    let mut rows = vec![];
    let mut per = vec![];
    for (k, res) in bal.results.iter().enumerate() {
        let (a, bb) = b[k];
        let p = OneModeBalanceProblem::from_gradients(&g.rho[k], &g.mu[k], a, bb)?;
        let best_probe = probe_one_mode(&p, res, BALANCE_PROBES, s.seed.wrapping_add(k as u64));
        r.checks.push(Check::flag(
            format!("Psi_{} descent", k + 1),
            res.psi_after - res.psi_before,
            res.psi_after <= res.psi_before * (1.0 + 1e-12),
        ));
        r.checks.push(Check::at_most(
            format!("Psi_{} best random probe improvement", k + 1),
            (res.psi_after - best_probe) / res.psi_after,
            s.tol_residual,
        ));
        r.csv.push(lambda_curve(&p, k)?);
        rows.push(vec![
            (k + 1).to_string(),
            fmt_matrix(&res.s),
            f4(res.lambda),
            f4(res.varsigma),
            f4(res.psi_angle),
            f4(res.psi_before),
            f4(res.psi_after),
            f4(bal.ratios[k]),
        ]);
        per.push(json!({
            "s": matrix_json(&res.s),
            "lambda": res.lambda,
            "varsigma": res.varsigma,
            "psi_angle": res.psi_angle,
            "psi_before": res.psi_before,
            "psi_after": res.psi_after,
            "ratio": bal.ratios[k],
            "newton_iterations": res.newton_iterations,
            "stationarity_residual": res.stationarity_residual,
            "best_probe": best_probe,
        }));
    }
    r.tables.push(table("balancing", &["k", "S_k", "lambda", "varsigma", "psi", "Psi(I)", "Psi(S)", "ratio"], rows));
    r.tables.push(table("total", &["quantity", "value"], vec![vec!["total ratio".into(), f4(bal.total_ratio)]]));

    let before = steady_state(c)?.purity.purity;
    let after = steady_state(&bal.transformed)?.purity.purity;
    r.checks.push(Check::at_most("purity invariance", (after - before).abs(), 1e-12));
    let mut gdev = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let points: Vec<Complex<f64>> = (0..5).map(|_| Complex::new(rng.random_range(0.0..2.0), rng.random_range(-5.0..5.0))).collect();
    for k in 0..c.len() {
        let (x, y) = (c.realization(k), bal.transformed.realization(k));
        for &sv in &points {
            let g0 = transfer_eval(&x.a, &x.b, &x.c, sv)?;
            let g1 = transfer_eval(&y.a, &y.b, &y.c, sv)?;
            gdev = gdev.max((g1 - &g0).norm() / g0.norm());
        }
    }
    r.checks.push(Check::at_most("transfer function invariance", gdev, 1e-9));
    r.insert("oscillators", per);
    r.insert("total_ratio", bal.total_ratio);
    r.insert("purity", before);
    let doc = to_document(bal.transformed.oscillators(), spec.uncertainty.as_ref(), Some(&spec.options));
    r.files.push(("balanced.json".into(), serde_json::to_string_pretty(&doc).unwrap_or_default()));
    Ok(())
}

fn cmd_mc(r: &mut ReportBundle, c: &CascadeModel, spec: &CascadeSpec, s: &Settings) -> Result<()> {
    let u = uncertainty(spec, s)?;
    let mc = monte_carlo_variance(c, &u, s.samples, s.seed)?;
    r.checks.push(Check {
        name: "Var(dV) / (eps Z) in [0.9, 1.1]".into(),
        value: mc.ratio,
        reference: Some(1.0),
        tolerance: Some(0.1),
        pass: (0.9..=1.1).contains(&mc.ratio),
    });
    r.insert("samples", mc.samples);
    r.insert("rejected", mc.rejected);
    r.insert("mean", mc.mean);
    r.insert("variance", mc.variance);
    r.insert("predicted", mc.predicted);
    r.insert("ratio", mc.ratio);
    r.insert("ratio_std_err", mc.ratio_std_err);
    r.tables.push(table(
        "Monte Carlo linearisation check",
        &["quantity", "value"],
        vec![
            vec!["samples".into(), mc.samples.to_string()],
            vec!["rejected".into(), mc.rejected.to_string()],
            vec!["Var(dV)".into(), format!("{:.4e}", mc.variance)],
            vec!["eps Z".into(), format!("{:.4e}", mc.predicted)],
            vec!["ratio".into(), f4(mc.ratio)],
            vec!["ratio std err".into(), f4(mc.ratio_std_err)],
        ],
    ));
    Ok(())
}

fn cmd_ti(r: &mut ReportBundle, c: &CascadeModel, s: &Settings) -> Result<()> {
    let mut csv = vec![];
    let mut rows = vec![];
    let mut per = vec![];
    for k in 0..c.len() {
        let m = TIModel::new(c.oscillator(k).clone()).map_err(|e| crate::cascade::reindex(e, k))?;
        let t = covariance_trace_bound(&m, s.kmax)?;
        r.checks.push(Check::flag(format!("oscillator {} trace bound holds", k + 1), t.hinf, t.holds));
        for (j, (tr, b)) in t.traces.iter().zip(&t.bounds).enumerate() {
            csv.push(vec![(k + 1) as f64, (j + 1) as f64, *tr, *b]);
        }
        rows.push(vec![(k + 1).to_string(), f4(t.h2), f4(t.hinf), t.holds.to_string()]);
        per.push(json!({"h2": t.h2, "hinf": t.hinf, "traces": t.traces, "bounds": t.bounds, "holds": t.holds}));
    }
    r.tables.push(table("identical-cascade trace bounds", &["oscillator", "|F|_2", "|G|_inf", "holds"], rows));
    r.csv.push(CsvSeries {
        file_name: "ti_bounds.csv".into(),
        header: vec!["oscillator".into(), "k".into(), "trace".into(), "bound".into()],
        rows: csv,
    });
    r.insert("oscillators", per);
    r.insert("kmax", s.kmax);
    Ok(())
}

fn cmd_reproduce(r: &mut ReportBundle, spec: &CascadeSpec) -> Result<()> {
    let cmp = reference::compare(spec)?;
    let mut rows = vec![];
    for k in 0..3 {
        rows.push(vec![
            (k + 1).to_string(),
            f4(cmp.psi_before[k]),
            f4(reference::PSI_BEFORE[k]),
            f4(cmp.psi_after[k]),
            f4(reference::PSI_AFTER[k]),
            f4(cmp.ratios[k]),
            f4(reference::RATIOS[k]),
        ]);
    }
    rows.push(vec!["total".into(), String::new(), String::new(), String::new(), String::new(), f4(cmp.total_ratio), f4(reference::TOTAL_RATIO)]);
    r.tables.push(table("sensitivity before and after balancing", &["k", "Psi(I)", "ref", "Psi(S)", "ref", "ratio", "ref"], rows));
    let rows = (0..3).map(|k| vec![(k + 1).to_string(), fmt_matrix(&cmp.s[k]), fmt_matrix(&reference::s_matrix(k))]).collect();
    r.tables.push(table("balancing transforms", &["k", "S_k", "ref"], rows));
    let rows = (0..3)
        .map(|k| {
            vec![
                (k + 1).to_string(),
                fmt_matrix(cmp.gradients.rho[k].as_matrix()),
                fmt_matrix(&reference::rho_matrix(k)),
                fmt_matrix(&cmp.gauge_gradients.mu[k]),
                fmt_matrix(&reference::mu_matrix(k)),
            ]
        })
        .collect();
    r.tables.push(table("gradients (mu in the M -> -M realisation)", &["k", "rho_k", "ref", "mu_k", "ref"], rows));
    r.tables.push(table(
        "coupling-gradient sign",
        &["comparison", "max abs deviation"],
        vec![
            vec!["mu computed vs printed".into(), f4(cmp.mu_literal_max_dev)],
            vec!["-mu computed vs printed".into(), f4(cmp.mu_flipped_max_dev)],
        ],
    ));
    r.checks.extend(cmp.checks.iter().cloned());
    r.insert("gradients", gradient_json(&cmp.gradients));
    r.insert("gradients_flipped_coupling", gradient_json(&cmp.gauge_gradients));
    r.insert("s", cmp.s.iter().map(matrix_json).collect::<Vec<_>>());
    r.insert("psi_before", &cmp.psi_before);
    r.insert("psi_after", &cmp.psi_after);
    r.insert("ratios", &cmp.ratios);
    r.insert("total_ratio", cmp.total_ratio);
    r.insert("mu_literal_max_dev", cmp.mu_literal_max_dev);
    r.insert("mu_flipped_max_dev", cmp.mu_flipped_max_dev);
    let (r1, r2) = reference::CURVE_R;
    r.csv.push(lambda_curve_series(&[r1, r2], "lambda_curve_example.csv"));
    Ok(())
}

/// Runs one command and returns the report. Files are not written.
pub fn run_command(args: &Args) -> Result<ReportBundle> {
    let spec = match (&args.spec, args.command) {
        (Some(p), _) => load_spec(p)?,
        (None, Command::ReproducePaper) => parse_spec(EXAMPLE_SPEC)?,
        (None, _) => return Err(Error::InvalidArgument("a spec path is required".into())),
    };
    let s = settings(args, &spec)?;
    let mut r = ReportBundle::new(args.command.name(), provenance(&spec, &s, args.command));
    let c = spec.cascade()?;
    if args.command != Command::Validate {
        c.require_hurwitz()?;
    }
    match args.command {
        Command::Validate => cmd_validate(&mut r, &c, &s)?,
        Command::Covariance => cmd_covariance(&mut r, &c)?,
        Command::Purity => cmd_purity(&mut r, &c)?,
        Command::Gradients => cmd_gradients(&mut r, &c, &s)?,
        Command::Sensitivity => cmd_sensitivity(&mut r, &c, &spec, &s)?,
        Command::Balance => cmd_balance(&mut r, &c, &spec, &s)?,
        Command::McCheck => cmd_mc(&mut r, &c, &spec, &s)?,
        Command::TiBounds => cmd_ti(&mut r, &c, &s)?,
        Command::ReproducePaper => cmd_reproduce(&mut r, &spec)?,
    }
    Ok(r)
}

/// Exit code: 0 success, 1 validation or check failure, 2 numerical failure.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let report = match run_command(&args) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    if let Err(e) = report.write_to(&args.out) {
        eprintln!("error: writing to {}: {e}", args.out.display());
        return e.exit_code();
    }
    match args.format {
        Format::Json => println!("{}", report.to_json()),
        Format::Csv => print!("{}", report.render_csv()),
        Format::Table => print!("{}", report.render_table()),
    }
    if report.all_pass() {
        0
    } else {
        for c in report.checks.iter().filter(|c| !c.pass) {
            eprintln!("check failed: {}", c.name);
        }
        1
    }
}
