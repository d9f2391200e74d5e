//! Command line entry points: run, sweep, rate, ground-state, truncate,
//! and the built-in invariant check suite.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand};

use crate::config::{
    execute_run, load_run_config, load_sweep_config, parse_run_config, sweep_cells, ModelChoice,
    RawGeometry, RawNonlinearity, RawRunConfig, SweepCell,
};
use crate::error::{KgError, Result};
use crate::grid::{DamperProfile, DamperShape, Grid};
use crate::nonlinearity::truncate::{truncate_first, truncate_second};
use crate::nonlinearity::{Nonlinearity, NonlinearityModel, Sign};
use crate::rates::{theoretical_rate, RateInputs, Regime};
use crate::stepper::{
    discrete_energy, simulate, step, SchemeConfig, SimulateOptions, StepState,
};
use crate::variational::{classify, shoot_ground_state, ClassLabel};

#[derive(Parser)]
#[command(
    name = "kg-damp",
    version,
    about = "Damped nonlinear Klein-Gordon laboratory"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Run one simulation from a JSON config.
    Run {
        config: PathBuf,
        /// Directory that relative output paths are joined to.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Run the cross product of a sweep config's axes.
    Sweep {
        config: PathBuf,
        /// Overrides the sweep config's out_dir.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Evaluate the closed-form rate constants from a JSON input record.
    Rate { inputs: PathBuf },
    /// Shoot a ground state for a focusing model and emit profile + record.
    GroundState {
        model: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Tabulate a truncated nonlinearity as CSV.
    Truncate {
        model: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
        #[arg(long)]
        k: f64,
        #[arg(long)]
        l: Option<f64>,
        /// Largest |z| tabulated; defaults to 10 max(k, l).
        #[arg(long)]
        z_max: Option<f64>,
        #[arg(long, default_value_t = 501)]
        samples: usize,
        /// Output CSV path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in invariant suite.
    Check {
        /// Substring filter on check names.
        #[arg(long)]
        filter: Option<String>,
    },
}

pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::Run { config, out_dir } => cmd_run(&config, &out_dir),
        Command::Sweep { config, out_dir } => cmd_sweep(&config, out_dir.as_deref()),
        Command::Rate { inputs } => cmd_rate(&inputs),
        Command::GroundState { model, out_dir } => cmd_ground_state(&model, &out_dir),
        Command::Truncate {
            model,
            theta,
            k,
            l,
            z_max,
            samples,
            out,
        } => cmd_truncate(&model, theta, k, l, z_max, samples, out.as_deref()),
        Command::Check { filter } => return cmd_check(filter.as_deref()),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn cmd_run(config_path: &Path, out_dir: &Path) -> Result<i32> {
    let (config, report) = load_run_config(config_path)?;
    for line in &report {
        println!("{line}");
    }
    let setup = config.build()?;
    for w in &setup.warnings {
        println!("warning: {w}");
    }
    let art = execute_run(&setup, out_dir)?;
    println!(
        "wrote {} and {}",
        art.csv_path.display(),
        art.summary_path.display()
    );
    match art.history.blowup {
        Some(t) => println!("blowup at t = {t}"),
        None => {
            let gamma = art.summary["gamma_fit"].as_f64();
            match gamma {
                Some(g) => println!(
                    "E0 = {}, E_final = {}, gamma_fit = {g}",
                    art.summary["E0"], art.summary["E_final"]
                ),
                None => println!(
                    "E0 = {}, E_final = {}",
                    art.summary["E0"], art.summary["E_final"]
                ),
            }
        }
    }
    Ok(art.exit_code)
}

struct SweepRow {
    status: String,
    e0: Option<f64>,
    gamma_fit: Option<f64>,
    r_squared: Option<f64>,
    mor: Option<(f64, f64, f64)>,
}

fn run_cell(cell: &SweepCell, root: &Path) -> SweepRow {
    let attempt = (|| -> Result<SweepRow> {
        let (config, _report) = parse_run_config(&cell.config)?;
        let setup = config.build()?;
        let cell_dir = root.join(format!("cell_{:03}", cell.index));
        let art = execute_run(&setup, &cell_dir)?;
        Ok(SweepRow {
            status: (if art.exit_code == 2 { "blowup" } else { "ok" }).into(),
            e0: art.summary["E0"].as_f64(),
            gamma_fit: art.summary["gamma_fit"].as_f64(),
            r_squared: art.summary["r_squared"].as_f64(),
            mor: Some((
                art.summary["mor_grad"].as_f64().unwrap_or(0.0),
                art.summary["mor_g"].as_f64().unwrap_or(0.0),
                art.summary["mor_damp"].as_f64().unwrap_or(0.0),
            )),
        })
    })();
    attempt.unwrap_or_else(|e| SweepRow {
        status: format!("error: {e}").replace(',', ";"),
        e0: None,
        gamma_fit: None,
        r_squared: None,
        mor: None,
    })
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn cmd_sweep(config_path: &Path, out_dir_flag: Option<&Path>) -> Result<i32> {
    let sweep = load_sweep_config(config_path)?;
    let cells = sweep_cells(&sweep)?;
    let root: PathBuf = out_dir_flag
        .map(Path::to_path_buf)
        .or_else(|| sweep.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("sweep_out"));
    fs::create_dir_all(&root)?;

    let hw = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let mut workers = sweep.parallelism.unwrap_or(hw).max(1);
    if let Some(cap) = std::env::var("KG_DAMP_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
    {
        workers = workers.min(cap.max(1));
    }
    workers = workers.min(cells.len());

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<SweepRow>>> =
        Mutex::new((0..cells.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cells.len() {
                    break;
                }
                let row = run_cell(&cells[i], &root);
                results.lock().unwrap()[i] = Some(row);
            });
        }
    });
    let rows = results.into_inner().unwrap();

    let mut out = String::new();
    out.push_str("# kg-damp v1\n");
    let mut header = String::from("cell");
    for axis in &sweep.axes {
        let _ = write!(header, ",{}", csv_field(&axis.path));
    }
    header.push_str(",status,E0,gamma_fit,r_squared,mor_grad,mor_g,mor_damp\n");
    out.push_str(&header);
    let mut failures = 0usize;
    for (cell, row) in cells.iter().zip(rows.iter()) {
        let row = row.as_ref().expect("every cell ran");
        let mut line = cell.index.to_string();
        for v in &cell.axis_values {
            let _ = write!(line, ",{}", csv_field(&v.to_string()));
        }
        let (mg, mgg, md) = row.mor.unwrap_or((0.0, 0.0, 0.0));
        let _ = write!(
            line,
            ",{},{},{},{},{},{},{}",
            row.status,
            opt_cell(row.e0),
            opt_cell(row.gamma_fit),
            opt_cell(row.r_squared),
            if row.mor.is_some() { mg.to_string() } else { String::new() },
            if row.mor.is_some() { mgg.to_string() } else { String::new() },
            if row.mor.is_some() { md.to_string() } else { String::new() },
        );
        out.push_str(&line);
        out.push('\n');
        println!("cell {:03} {}", cell.index, row.status);
        if row.status.starts_with("error") {
            failures += 1;
        }
    }
    let agg = root.join("sweep.csv");
    fs::write(&agg, out)?;
    println!(
        "wrote {} ({} cells, {} failed)",
        agg.display(),
        cells.len(),
        failures
    );
    Ok(if failures > 0 { 1 } else { 0 })
}

/// Quotes a value for a CSV cell when it contains a delimiter, quote, or newline.
fn csv_field(raw: &str) -> String {
    if raw.contains(',') || raw.contains('"') || raw.contains('\n') {
        format!("\"{}\"", raw.replace('"', "\"\""))
    } else {
        raw.to_string()
    }
}

fn cmd_rate(inputs_path: &Path) -> Result<i32> {
    let text = fs::read_to_string(inputs_path)?;
    let inputs: RateInputs = serde_json::from_str(&text)
        .map_err(|e| KgError::Config(format!("{}: {e}", inputs_path.display())))?;
    let out = theoretical_rate(&inputs)?;
    let record = serde_json::json!({
        "T": out.t_window,
        "delta": out.delta,
        "gamma": out.gamma,
        "regime": inputs.regime,
    });
    println!("{}", serde_json::to_string_pretty(&record)?);
    Ok(0)
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct GroundStateRequest {
    nonlinearity: Option<RawNonlinearity>,
    geometry: Option<RawGeometry>,
    c: Option<f64>,
}

fn cmd_ground_state(model_path: &Path, out_dir: &Path) -> Result<i32> {
    let text = fs::read_to_string(model_path)?;
    let req: GroundStateRequest = serde_json::from_str(&text)
        .map_err(|e| KgError::Config(format!("{}: {e}", model_path.display())))?;
    let raw = RawRunConfig {
        nonlinearity: req.nonlinearity,
        geometry: req.geometry,
        mode: Some("focusing".into()),
        ..RawRunConfig::default()
    };
    let (config, _report) = crate::config::from_raw(&raw)?;
    let g = config.geometry;
    let grid = Grid::new(g.n_dim, g.r_inner, g.l, g.dr)?;
    let model = config.build_model()?;
    let c = req.c.unwrap_or(1.0);
    let gs = shoot_ground_state(model.as_dyn(), c, &grid)?;

    fs::create_dir_all(out_dir)?;
    let mut csv = String::from("# kg-damp v1\nr,Q\n");
    for (j, &x) in grid.coords().iter().enumerate() {
        let _ = writeln!(csv, "{},{}", x, gs.profile[j]);
    }
    let csv_path = out_dir.join("ground_state.csv");
    fs::write(&csv_path, csv)?;

    let record = serde_json::json!({
        "c": gs.c,
        "m": gs.m,
        "Q0": gs.q0,
        "residual": gs.residual,
        "K_check": gs.k_check,
    });
    let json_path = out_dir.join("ground_state.json");
    let mut text = serde_json::to_string_pretty(&record)?;
    text.push('\n');
    fs::write(&json_path, text)?;
    println!(
        "wrote {} and {} (Q0 = {}, m = {})",
        csv_path.display(),
        json_path.display(),
        gs.q0,
        gs.m
    );
    Ok(0)
}

fn cmd_truncate(
    model_path: &Path,
    theta: f64,
    k: f64,
    l: Option<f64>,
    z_max: Option<f64>,
    samples: usize,
    out: Option<&Path>,
) -> Result<i32> {
    let text = fs::read_to_string(model_path)?;
    let block: RawNonlinearity = serde_json::from_str(&text)
        .map_err(|e| KgError::Config(format!("{}: {e}", model_path.display())))?;
    if block.truncation.is_some() {
        return Err(KgError::Config(
            "truncation radii come from the --theta/--k/--l flags, not the model file".into(),
        ));
    }
    let raw = RawRunConfig {
        nonlinearity: Some(block),
        mode: Some("defocusing".into()),
        ..RawRunConfig::default()
    };
    let (config, _report) = crate::config::from_raw(&raw)?;
    let base = match config.build_model()? {
        ModelChoice::Plain(m) => m,
        ModelChoice::Truncated(_) => unreachable!("no truncation block accepted"),
    };
    let first = truncate_first(&base, theta, k)?;
    let second = match l {
        Some(l) => Some(truncate_second(&first, l)?),
        None => None,
    };

    if samples < 2 {
        return Err(KgError::Config("need at least 2 samples".into()));
    }
    let z_hi = z_max.unwrap_or(10.0 * l.unwrap_or(k).max(k));
    let mut table = String::from("# kg-damp v1\nz,f,f_k,f_kl,f_prime,f_k_prime,f_kl_prime\n");
    for i in 0..samples {
        let z = z_hi * i as f64 / (samples - 1) as f64;
        let fkl = second.as_ref().map_or_else(|| first.f(z), |s| s.f(z));
        let fklp = second.as_ref().map_or_else(|| first.fprime(z), |s| s.fprime(z));
        let _ = writeln!(
            table,
            "{},{},{},{},{},{},{}",
            z,
            base.f(z),
            first.f(z),
            fkl,
            base.fprime(z),
            first.fprime(z),
            fklp
        );
    }
    match out {
        Some(path) => {
            fs::write(path, table)?;
            println!("wrote {}", path.display());
        }
        None => print!("{table}"),
    }
    Ok(0)
}

// The invariant suite behind `kg-damp check`.

type CheckFn = fn() -> Result<String>;

fn gaussian_data(grid: &Grid, amp: f64, width: f64) -> Vec<f64> {
    let mut u: Vec<f64> = grid
        .coords()
        .iter()
        .map(|&x| amp * (-x * x / (2.0 * width * width)).exp())
        .collect();
    grid.pin_dirichlet(&mut u);
    u
}

fn quartic(sign: Sign) -> NonlinearityModel {
    NonlinearityModel::power_sum(&[(1.0, 4.0)], sign).expect("valid terms")
}

fn check_quadrature_volume() -> Result<String> {
    let g = Grid::radial(3, 0.0, 10.0, 0.01)?;
    let ones = vec![1.0; g.n_nodes()];
    let vol = g.integrate(&ones)?;
    let exact = 4.0 / 3.0 * std::f64::consts::PI * 1000.0;
    let rel = (vol - exact).abs() / exact;
    if rel <= 1e-6 {
        Ok(format!("ball volume rel err {rel:.2e}"))
    } else {
        Err(KgError::Invalid(format!("ball volume rel err {rel:.2e}")))
    }
}

fn check_laplacian_eigen() -> Result<String> {
    let g = Grid::radial(3, 0.0, 10.0, 0.05)?;
    let u: Vec<f64> = g.coords().iter().map(|&r| r * r).collect();
    let lap = g.laplacian(&u)?;
    let mut worst = 0.0f64;
    for j in 0..g.n_nodes() {
        if g.is_dirichlet(j) {
            continue;
        }
        worst = worst.max((lap[j] - 6.0).abs());
    }
    if worst <= 1e-8 {
        Ok(format!("Lap r^2 = 6 within {worst:.2e}"))
    } else {
        Err(KgError::Invalid(format!("Lap r^2 error {worst:.2e}")))
    }
}

fn damped_demo_history() -> Result<crate::diagnostics::RunHistory> {
    let g = Grid::line(12.0, 0.1)?;
    let d = DamperProfile::new(&g, DamperShape::Smoothstep, 1.0, 3.0, 1.0, 1.0)?;
    let m = quartic(Sign::Defocusing);
    let scheme = SchemeConfig::conservative(0.08);
    let u0 = gaussian_data(&g, 0.5, 1.5);
    let v0 = vec![0.0; g.n_nodes()];
    let opts = SimulateOptions::new(8.0, 2);
    simulate(&g, &d, &m, &scheme, &u0, &v0, &opts)
}

fn check_energy_identity() -> Result<String> {
    let h = damped_demo_history()?;
    let e0 = h.e0();
    let mut worst = 0.0f64;
    for r in &h.records {
        worst = worst.max((r.e - e0 + 2.0 * r.a_cum).abs());
    }
    let bound = 1e-9 * (1.0 + e0);
    if worst <= bound {
        Ok(format!("max defect {worst:.2e} <= {bound:.2e}"))
    } else {
        Err(KgError::Invalid(format!("defect {worst:.2e} > {bound:.2e}")))
    }
}

fn check_energy_monotone() -> Result<String> {
    let h = damped_demo_history()?;
    let slack = 1e-12 * (1.0 + h.e0());
    for w in h.records.windows(2) {
        if w[1].e > w[0].e + slack {
            return Err(KgError::Invalid(format!(
                "energy rose from {} to {} at t = {}",
                w[0].e, w[1].e, w[1].t
            )));
        }
    }
    Ok(format!(
        "E fell {} -> {} over {} samples",
        h.e0(),
        h.records.last().map(|r| r.e).unwrap_or(0.0),
        h.records.len()
    ))
}

fn check_reversibility() -> Result<String> {
    let g = Grid::line(8.0, 0.1)?;
    let d = DamperProfile::zero(&g);
    let m = quartic(Sign::Defocusing);
    let scheme = SchemeConfig::conservative(0.05);
    let u0 = gaussian_data(&g, 0.5, 1.2);
    let v0: Vec<f64> = g
        .coords()
        .iter()
        .map(|&x| 0.1 * x * (-x * x).exp())
        .collect();
    let mut st = StepState::from_initial(&g, &d, &m, &scheme, &u0, &v0)?;
    let lvl0 = st.u_prev.clone();
    for _ in 0..200 {
        step(&mut st, &g, &d, &m, &scheme)?;
    }
    std::mem::swap(&mut st.u_prev, &mut st.u_curr);
    for _ in 0..200 {
        step(&mut st, &g, &d, &m, &scheme)?;
    }
    let worst = st
        .u_curr
        .iter()
        .zip(&lvl0)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    if worst <= 1e-8 {
        Ok(format!("round trip error {worst:.2e}"))
    } else {
        Err(KgError::Invalid(format!("round trip error {worst:.2e}")))
    }
}

fn check_ground_state() -> Result<String> {
    let g = Grid::line(20.0, 0.1)?;
    let m = NonlinearityModel::power_sum(&[(0.5, 4.0)], Sign::Focusing)?;
    let gs = shoot_ground_state(&m, 1.0, &g)?;
    let mut worst = 0.0f64;
    for (j, &x) in g.coords().iter().enumerate() {
        worst = worst.max((gs.profile[j] - 1.0 / x.cosh()).abs());
    }
    let dm = (gs.m - 4.0 / 3.0).abs();
    if worst <= 1e-5 && dm <= 1e-3 && gs.k_check.abs() <= 1e-4 {
        Ok(format!(
            "profile err {worst:.2e}, |m - 4/3| = {dm:.2e}, K = {:.2e}",
            gs.k_check
        ))
    } else {
        Err(KgError::Invalid(format!(
            "profile err {worst:.2e}, m = {}, K = {}",
            gs.m, gs.k_check
        )))
    }
}

fn check_classification() -> Result<String> {
    let g = Grid::line(20.0, 0.1)?;
    let m = NonlinearityModel::power_sum(&[(0.5, 4.0)], Sign::Focusing)?;
    let gs = shoot_ground_state(&m, 1.0, &g)?;
    let v0 = vec![0.0; g.n_nodes()];
    let below: Vec<f64> = gs.profile.iter().map(|&q| 0.95 * q).collect();
    let above: Vec<f64> = gs.profile.iter().map(|&q| 1.05 * q).collect();
    let c1 = classify(&below, &v0, &g, &m, gs.m)?;
    let c2 = classify(&above, &v0, &g, &m, gs.m)?;
    if c1.label == ClassLabel::KPlus && c2.label == ClassLabel::KMinus {
        Ok(format!(
            "0.95Q -> Kplus (K = {:.3}), 1.05Q -> Kminus (K = {:.3})",
            c1.k_value, c2.k_value
        ))
    } else {
        Err(KgError::Invalid(format!(
            "labels {:?} / {:?}",
            c1.label, c2.label
        )))
    }
}

fn check_rate_formulas() -> Result<String> {
    let unit = RateInputs {
        regime: Regime::ConditionF,
        m_bound: 1.0,
        r_active: 1.0,
        a0: 1.0,
        c0: 1.0,
        c_star: 1.0,
        q_growth: None,
        e0: None,
        nu: None,
        c_script: None,
        epsilon: None,
    };
    let out = theoretical_rate(&unit)?;
    let t_exact = 3.0f64.exp();
    let d_exact = 0.5 / (2.0 + t_exact);
    let g_exact = (1.0 + d_exact).ln() / t_exact;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    if rel(out.t_window, t_exact) > 1e-12
        || rel(out.delta, d_exact) > 1e-12
        || rel(out.gamma, g_exact) > 1e-12
    {
        return Err(KgError::Invalid(format!(
            "unit constants gave T = {}, delta = {}, gamma = {}",
            out.t_window, out.delta, out.gamma
        )));
    }
    // Doubling any structural constant slows the predicted rate.
    for patch in ["m", "r", "c0"] {
        let mut p = unit.clone();
        match patch {
            "m" => p.m_bound = 2.0,
            "r" => p.r_active = 2.0,
            _ => p.c0 = 2.0,
        }
        let slower = theoretical_rate(&p)?;
        if slower.gamma >= out.gamma {
            return Err(KgError::Invalid(format!(
                "gamma failed to decrease when doubling {patch}"
            )));
        }
    }
    Ok(format!(
        "T = {:.6}, delta = {:.8}, gamma = {:.10}",
        out.t_window, out.delta, out.gamma
    ))
}

fn check_mutation_sv() -> Result<String> {
    let g = Grid::line(10.0, 0.1)?;
    let d = DamperProfile::zero(&g);
    let m = quartic(Sign::Defocusing);
    let mut scheme = SchemeConfig::conservative(0.08);
    scheme.disable_sv_quotient = true;
    let u0 = gaussian_data(&g, 0.6, 1.5);
    let v0 = vec![0.0; g.n_nodes()];
    let mut st = StepState::from_initial(&g, &d, &m, &scheme, &u0, &v0)?;
    let e0 = discrete_energy(&st, &g, &m)?;
    let mut worst = 0.0f64;
    for _ in 0..200 {
        step(&mut st, &g, &d, &m, &scheme)?;
        worst = worst.max((discrete_energy(&st, &g, &m)? - e0).abs());
    }
    let floor = 1e-7 * (1.0 + e0);
    // This check passes only when the mutation visibly breaks conservation.
    if worst > floor {
        Ok(format!("midpoint mutation drifts {worst:.2e} > {floor:.2e}"))
    } else {
        Err(KgError::Invalid(format!(
            "mutated scheme still conserved energy ({worst:.2e})"
        )))
    }
}

const CHECKS: &[(&str, CheckFn)] = &[
    ("quadrature_volume", check_quadrature_volume),
    ("laplacian_eigen", check_laplacian_eigen),
    ("energy_identity", check_energy_identity),
    ("energy_monotone", check_energy_monotone),
    ("reversibility", check_reversibility),
    ("ground_state", check_ground_state),
    ("classification", check_classification),
    ("rate_formulas", check_rate_formulas),
    ("mutation_sv", check_mutation_sv),
];

pub fn cmd_check(filter: Option<&str>) -> i32 {
    let mut ran = 0usize;
    let mut failed = 0usize;
    for (name, check) in CHECKS {
        if let Some(f) = filter {
            if !name.contains(f) {
                continue;
            }
        }
        ran += 1;
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(e) => {
                failed += 1;
                println!("FAIL {name}: {e}");
            }
        }
    }
    if ran == 0 {
        println!("no checks matched the filter");
        return 0;
    }
    println!("{} checks, {} failed", ran, failed);
    if failed > 0 {
        1
    } else {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::csv_field;

    #[test]
    fn csv_cells_with_delimiters_get_quoted() {
        assert_eq!(csv_field("plain"), "plain");
        assert_eq!(csv_field("3.5"), "3.5");
        assert_eq!(csv_field("[[0.1,4.0]]"), "\"[[0.1,4.0]]\"");
        assert_eq!(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
    }
}
