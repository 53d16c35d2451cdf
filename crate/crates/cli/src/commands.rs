//! The subcommands. Each builds a [`RunConfig`], loads its inputs, calls the
//! library and writes its artifacts from this (single) thread.

use std::path::Path;
use std::sync::Arc;

use roughkit::algebra::GroupTensor;
use roughkit::controlled::check_controlled;
use roughkit::io::{fields_from_json, function_from_json, rough_path_to_json, tensor_from_json, tensor_to_json, FunctionSpec};
use roughkit::rde::{fixed_point_residual, solve_rde_path, VectorFieldSystem};
use roughkit::roughpath::{lift_pl, n_gamma, sample_fbm, GeometricRoughPath, PiecewiseLinearPath};
use roughkit::rpde::{
    duality_check, partition_between, pushforward, solve_transport, space_grid, uniform_grid, verify_continuity,
    verify_transport, FlowSolution, ParticleMeasure, TransportProblem,
};
use roughkit::smooth::{Compose, Polynomial, SmoothFn, TanhCutoff};

use crate::config::RunConfig;
use crate::report::{Check, VerificationReport};
use crate::selftest::{hurst_for, run_all, run_criterion, SelftestConfig, CRITERIA};
use crate::table::{numbered, parse_list, write_output, Table};
use crate::{Cli, Command, DriverArgs, Failure, Global, SigArgs, VerifyTarget};

type Out<T> = Result<T, Failure>;

fn core<T>(op: &str, r: roughkit::Result<T>) -> Out<T> {
    r.map_err(|e| Failure::from_core(op, e))
}

fn input(m: impl Into<String>) -> Failure {
    Failure::Input(m.into())
}

fn read(path: &Path, cfg: &mut RunConfig, key: &str) -> Out<String> {
    let text =
        std::fs::read_to_string(path).map_err(|e| input(format!("cli: cannot read {}: {e}", path.display())))?;
    cfg.input(key, text.as_bytes());
    Ok(text)
}

fn emit(path: Option<&str>, text: &str) -> Out<()> {
    write_output(path, text).map_err(|e| input(format!("cli: cannot write {}: {e}", path.unwrap_or("stdout"))))
}

fn base_config(command: &str, g: &Global) -> Out<RunConfig> {
    let mut cfg = RunConfig::new(command, g.seed.unwrap_or(0));
    cfg.gamma = g.gamma;
    cfg.level = g.level;
    cfg.mesh = g.mesh;
    cfg.out = g.out.clone();
    cfg.report = g.report.clone();
    cfg.validate().map_err(|m| input(format!("cli: {m}")))?;
    Ok(cfg)
}

pub fn dispatch(cli: &Cli) -> Out<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Sig(a) => sig(a, base_config("sig", g)?),
        Command::Rde(a) => rde(&a.driver, &a.x0, base_config("rde", g)?),
        Command::Transport(a) => transport(&a.driver, &a.terminal, &a.query, base_config("transport", g)?),
        Command::Continuity(a) => continuity(&a.driver, &a.mu, a.at.as_deref(), base_config("continuity", g)?),
        Command::Verify { target } => verify(target, g),
        Command::Selftest(a) => selftest(a.criteria.as_deref(), g),
    }
}

fn sig(a: &SigArgs, mut cfg: RunConfig) -> Out<()> {
    if let Some(p) = &a.tensor {
        let text = read(p, &mut cfg, "tensor")?;
        let t = core("io::tensor_from_json", tensor_from_json(&text))?;
        let g = core("algebra::GroupTensor::new", GroupTensor::new(t, a.tolerance))?;
        return emit(cfg.out.as_deref(), &tensor_to_json(g.inverse().tensor()));
    }
    let gamma = cfg
        .gamma
        .ok_or_else(|| input("cli: sig needs --gamma when building a rough path"))?;
    let level = cfg.level.unwrap_or(n_gamma(gamma));
    let path = match (&a.path, a.fbm) {
        (Some(p), _) => {
            let t = Table::parse(&read(p, &mut cfg, "path")?, &p.display().to_string()).map_err(input)?;
            if t.width() < 2 {
                return Err(input("cli: path CSV needs a time column and at least one coordinate"));
            }
            let times = t.rows.iter().map(|r| r[0]).collect();
            let values = t.rows.iter().map(|r| r[1..].to_vec()).collect();
            core("roughpath::PiecewiseLinearPath::new", PiecewiseLinearPath::new(times, values))?
        }
        (None, Some(d)) => {
            let hurst = a.hurst.unwrap_or(hurst_for(gamma));
            cfg.param("fbm_dim", d);
            cfg.param("hurst", hurst);
            cfg.param("knots", a.knots);
            core("roughpath::sample_fbm", sample_fbm(hurst, d, a.knots, cfg.seed))?
        }
        (None, None) => return Err(input("cli: sig needs --path, --fbm or --tensor")),
    };
    let w = core("roughpath::lift_pl", lift_pl(&path, gamma, level))?;
    match &a.increment {
        Some(st) => {
            let v = parse_list(st, "--increment").map_err(|m| input(format!("cli: {m}")))?;
            if v.len() != 2 {
                return Err(input("cli: --increment takes \"s,t\""));
            }
            let g = core("roughpath::increment", w.increment(v[0], v[1]))?;
            emit(cfg.out.as_deref(), &tensor_to_json(g.tensor()))
        }
        None => emit(cfg.out.as_deref(), &rough_path_to_json(&w)),
    }
}

/// Driver, fields and the solver grid of one run.
struct Setup {
    driver: Arc<GeometricRoughPath>,
    fields: Arc<VectorFieldSystem>,
    horizon: f64,
    mesh: Vec<f64>,
}

fn setup(a: &DriverArgs, cfg: &mut RunConfig) -> Out<Setup> {
    let text = read(&a.driver, cfg, "driver")?;
    let mut w = core("io::rough_path_from_json", roughkit::io::rough_path_from_json(&text))?;
    if let Some(g) = cfg.gamma {
        w = core("roughpath::with_gamma", w.with_gamma(g))?;
    }
    if let Some(l) = cfg.level {
        if l < w.n_gamma() {
            return Err(input(format!("cli: level {l} is below N_gamma = {}", w.n_gamma())));
        }
        if l != w.level() {
            w = core("roughpath::relift", w.relift(l))?;
        }
    }
    let fields = core(
        "io::fields_from_json",
        fields_from_json(&read(&a.fields, cfg, "fields")?),
    )?;
    let horizon = a.horizon.unwrap_or(w.end());
    if let Some(h) = a.horizon {
        cfg.param("horizon", h);
    }
    if !(horizon > w.start() && horizon <= w.end()) {
        return Err(input(format!(
            "cli: horizon {horizon} outside ({}, {}]",
            w.start(),
            w.end()
        )));
    }
    let mesh = match cfg.mesh {
        Some(h) => uniform_grid(w.start(), horizon, cells_for(horizon - w.start(), h)),
        None => partition_between(w.times(), w.start(), horizon),
    };
    Ok(Setup {
        driver: Arc::new(w),
        fields: Arc::new(fields),
        horizon,
        mesh,
    })
}

fn cells_for(length: f64, h: f64) -> usize {
    ((length / h) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

fn rde(a: &DriverArgs, x0: &str, mut cfg: RunConfig) -> Out<()> {
    let x0 = parse_list(x0, "--x0").map_err(|m| input(format!("cli: {m}")))?;
    cfg.param("x0", x0.clone());
    let s = setup(a, &mut cfg)?;
    let x = core(
        "rde::solve_rde",
        solve_rde_path(&x0, s.fields.clone(), s.driver.clone(), &s.mesh),
    )?;
    let n = s.fields.n();
    let mut header = vec!["t".to_string()];
    header.extend(numbered("x", n));
    let mut t = Table::new(header);
    for (k, &time) in x.times().iter().enumerate() {
        let mut row = vec![time];
        row.extend_from_slice(x.primal(k));
        t.rows.push(row);
    }
    emit(cfg.out.as_deref(), &t.to_csv())?;
    if cfg.report.is_some() {
        let mut c = Check::new("rde solution");
        c.metric(
            "fixed-point residual",
            core("rde::fixed_point_residual", fixed_point_residual(&x, &s.fields))?,
        );
        c.orders("controlled", &core("controlled::check_controlled", check_controlled(&x))?);
        finish("rde", &cfg, vec![c])?;
    }
    Ok(())
}

fn terminal_problem(s: &Setup, path: &Path, cfg: &mut RunConfig) -> Out<TransportProblem> {
    let g = core("io::function_from_json", function_from_json(&read(path, cfg, "terminal")?))?;
    core(
        "rpde::TransportProblem::new",
        TransportProblem::new(s.fields.clone(), g, s.driver.clone(), s.horizon),
    )
}

fn transport(a: &DriverArgs, terminal: &Path, query: &Path, mut cfg: RunConfig) -> Out<()> {
    let s = setup(a, &mut cfg)?;
    let p = terminal_problem(&s, terminal, &mut cfg)?;
    let q = Table::parse(&read(query, &mut cfg, "query")?, &query.display().to_string()).map_err(input)?;
    let n = s.fields.n();
    if q.width() != n + 1 {
        return Err(input(format!("cli: query CSV needs t and {n} coordinates, found {} columns", q.width())));
    }
    let queries: Vec<(f64, Vec<f64>)> = q.rows.iter().map(|r| (r[0], r[1..].to_vec())).collect();
    let u = core("rpde::solve_transport", solve_transport(&p, &queries, &s.mesh))?;
    let mut header = q.header.clone();
    header.extend(numbered("u", p.terminal.dim_out()));
    let mut t = Table::new(header);
    for (row, val) in q.rows.iter().zip(u) {
        let mut r = row.clone();
        r.extend(val);
        t.rows.push(r);
    }
    emit(cfg.out.as_deref(), &t.to_csv())
}

fn read_measure(path: &Path, n: usize, cfg: &mut RunConfig) -> Out<ParticleMeasure> {
    let t = Table::parse(&read(path, cfg, "mu")?, &path.display().to_string()).map_err(input)?;
    if t.width() != n + 1 {
        return Err(input(format!(
            "cli: particles CSV needs a weight and {n} coordinates, found {} columns",
            t.width()
        )));
    }
    core(
        "rpde::ParticleMeasure::new",
        ParticleMeasure::new(
            t.rows.iter().map(|r| r[1..].to_vec()).collect(),
            t.rows.iter().map(|r| r[0]).collect(),
        ),
    )
}

/// `mesh` refined so that it contains `at` (sorted), with the index of each
/// requested time.
fn merge(mesh: &[f64], at: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut all: Vec<f64> = mesh.iter().chain(at).copied().collect();
    all.sort_by(f64::total_cmp);
    let snap = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    all.dedup_by(|b, a| snap(*a, *b));
    let idx = at
        .iter()
        .map(|&t| all.iter().position(|&m| snap(m, t)).expect("merged time"))
        .collect();
    (all, idx)
}

fn continuity(a: &DriverArgs, mu: &Path, at: Option<&str>, mut cfg: RunConfig) -> Out<()> {
    let s = setup(a, &mut cfg)?;
    let m = read_measure(mu, s.fields.n(), &mut cfg)?;
    let at = match at {
        Some(l) => {
            let v = parse_list(l, "--at").map_err(|m| input(format!("cli: {m}")))?;
            cfg.param("at", v.clone());
            v
        }
        None => vec![s.horizon],
    };
    if let Some(t) = at.iter().find(|&&t| !(t >= s.driver.start() && t <= s.horizon)) {
        return Err(input(format!("cli: output time {t} outside [{}, {}]", s.driver.start(), s.horizon)));
    }
    let (part, idx) = merge(&s.mesh, &at);
    let rho = core("rpde::pushforward", pushforward(s.fields.clone(), &s.driver, &m, &part))?;
    let mut header = vec!["t".to_string(), "weight".to_string()];
    header.extend(numbered("x", s.fields.n()));
    let mut t = Table::new(header);
    for (&time, &k) in at.iter().zip(&idx) {
        for (x, w) in rho[k].points.iter().zip(&rho[k].weights) {
            let mut row = vec![time, *w];
            row.extend_from_slice(x);
            t.rows.push(row);
        }
    }
    emit(cfg.out.as_deref(), &t.to_csv())
}

/// Cutoff monomials of degree one and two in `n` variables.
pub fn default_test_family(n: usize) -> Vec<SmoothFn> {
    let cut: SmoothFn = Arc::new(TanhCutoff { dim: n, scale: 2.0 });
    let mut powers = Vec::new();
    for i in 0..n {
        let mut p = vec![0u32; n];
        p[i] = 1;
        powers.push(p);
    }
    for i in 0..n {
        for j in i..n {
            let mut p = vec![0u32; n];
            p[i] += 1;
            p[j] += 1;
            powers.push(p);
        }
    }
    powers
        .into_iter()
        .map(|p| {
            let poly: SmoothFn = Arc::new(Polynomial::scalar(n, &[(1.0, &p)]));
            Arc::new(Compose::new(poly, cut.clone()).expect("matching dimensions")) as SmoothFn
        })
        .collect()
}

/// The uniform time set of `cells` cells on `[start, horizon]`, embedded in a
/// refinement of the solver mesh; returns (partition, indices of the set).
fn time_set(s: &Setup, cells: usize) -> (Vec<f64>, Vec<usize>) {
    let start = s.driver.start();
    let r = (s.mesh.len().saturating_sub(1)).div_ceil(cells).max(1);
    let part = uniform_grid(start, s.horizon, cells * r);
    let idx = (0..=cells).map(|j| j * r).collect();
    (part, idx)
}

fn verify(target: &VerifyTarget, g: &Global) -> Out<()> {
    match target {
        VerifyTarget::Transport {
            driver,
            terminal,
            space,
            cells,
        } => {
            let mut cfg = base_config("verify transport", g)?;
            let sp = parse_list(space, "--space").map_err(|m| input(format!("cli: {m}")))?;
            if sp.len() != 3 || sp[2] < 1.0 || sp[2].fract() != 0.0 || sp[0] >= sp[1] {
                return Err(input("cli: --space takes \"lo,hi,k\" with lo < hi and k >= 1"));
            }
            if *cells < 2 {
                return Err(input("cli: --cells must be at least 2"));
            }
            cfg.param("space", sp.clone());
            cfg.param("cells", *cells);
            let s = setup(driver, &mut cfg)?;
            let p = terminal_problem(&s, terminal, &mut cfg)?;
            let grid = space_grid(s.fields.n(), sp[0], sp[1], sp[2] as usize);
            let times = uniform_grid(s.driver.start(), s.horizon, *cells);
            let sol = core("rpde::FlowSolution::new", FlowSolution::new(&p, &s.mesh))?;
            let r = core("rpde::verify_transport", verify_transport(&p, &sol, &grid, &times))?;
            let mut c = Check::new("transport graded estimates");
            c.orders("transport", &r);
            finish("verify transport", &cfg, vec![c])
        }
        VerifyTarget::Continuity {
            driver,
            mu,
            phis,
            cells,
        } => {
            let mut cfg = base_config("verify continuity", g)?;
            if *cells < 2 {
                return Err(input("cli: --cells must be at least 2"));
            }
            cfg.param("cells", *cells);
            let s = setup(driver, &mut cfg)?;
            let m = read_measure(mu, s.fields.n(), &mut cfg)?;
            let family = match phis {
                Some(p) => {
                    let text = read(p, &mut cfg, "phis")?;
                    let specs: Vec<FunctionSpec> = serde_json::from_str(&text).map_err(|e| {
                        input(format!("io::function_from_json: cannot parse test functions JSON: {e}"))
                    })?;
                    specs
                        .iter()
                        .map(|f| core("io::function_from_json", f.build()))
                        .collect::<Out<Vec<_>>>()?
                }
                None => default_test_family(s.fields.n()),
            };
            let (part, idx) = time_set(&s, *cells);
            let rho = core("rpde::pushforward", pushforward(s.fields.clone(), &s.driver, &m, &part))?;
            let rho: Vec<ParticleMeasure> = idx.iter().map(|&k| rho[k].clone()).collect();
            let times: Vec<f64> = idx.iter().map(|&k| part[k]).collect();
            let mut c = Check::new("continuity graded estimates");
            let drift = rho.iter().map(|r| (r.mass() - m.mass()).abs()).fold(0.0, f64::max);
            c.bound("mass drift", drift, 1e-14 * m.mass().abs().max(1.0));
            let r = core(
                "rpde::verify_continuity",
                verify_continuity(s.fields.clone(), &s.driver, &rho, &times, &family),
            )?;
            c.orders("continuity", &r);
            finish("verify continuity", &cfg, vec![c])
        }
        VerifyTarget::Duality {
            driver,
            terminal,
            mu,
            probes,
            tolerance,
        } => {
            let mut cfg = base_config("verify duality", g)?;
            if *probes < 2 {
                return Err(input("cli: --probes must be at least 2"));
            }
            cfg.param("probes", *probes);
            cfg.tolerances.insert("drift".into(), *tolerance);
            cfg.validate().map_err(|m| input(format!("cli: {m}")))?;
            let s = setup(driver, &mut cfg)?;
            let p = terminal_problem(&s, terminal, &mut cfg)?;
            let m = read_measure(mu, s.fields.n(), &mut cfg)?;
            let start = s.driver.start();
            let len = s.horizon - start;
            let grid: Vec<f64> = (0..*probes)
                .map(|j| start + len * (j as f64 + 0.37) / *probes as f64)
                .collect();
            let r = core("rpde::duality_check", duality_check(&p, &m, &grid, &s.mesh))?;
            let mut c = Check::new("duality constancy");
            c.bound("drift", r.drift, *tolerance);
            c.metric("alpha", r.alpha.clone());
            finish("verify duality", &cfg, vec![c])
        }
    }
}

/// Writes the report (to `--report`, else `--out`, else stdout) and maps a failed check to
/// exit status 1.
fn finish(command: &str, cfg: &RunConfig, checks: Vec<Check>) -> Out<()> {
    let report = VerificationReport::new(command, cfg.seed, cfg, checks);
    emit(cfg.report.as_deref().or(cfg.out.as_deref()), &(report.to_json() + "\n"))?;
    if report.pass {
        Ok(())
    } else {
        let lines: Vec<String> = report
            .checks
            .iter()
            .filter(|c| !c.pass)
            .flat_map(|c| c.failures().into_iter().map(move |f| format!("{}: {f}", c.name)))
            .collect();
        Err(Failure::Verification(format!("{command}: verification failed\n  {}", lines.join("\n  "))))
    }
}

fn selftest(criteria: Option<&str>, g: &Global) -> Out<()> {
    let mut cfg = base_config("selftest", g)?;
    let st = SelftestConfig {
        seed: g.seed.unwrap_or(SelftestConfig::default().seed),
        gamma: g.gamma.unwrap_or(SelftestConfig::default().gamma),
    };
    cfg.seed = st.seed;
    cfg.gamma = Some(st.gamma);
    let checks = match criteria {
        None => run_all(&st),
        Some(list) => {
            let ids = list
                .split(',')
                .map(|x| {
                    x.trim()
                        .parse::<u32>()
                        .ok()
                        .filter(|id| CRITERIA.iter().any(|c| c.0 == *id))
                        .ok_or_else(|| input(format!("cli: unknown criterion {:?}", x.trim())))
                })
                .collect::<Out<Vec<u32>>>()?;
            cfg.param("criteria", ids.clone());
            ids.iter().map(|&id| run_criterion(id, &st)).collect()
        }
    };
    for c in &checks {
        eprintln!("[{}] {} ({:.1}s)", if c.pass { "PASS" } else { "FAIL" }, c.name, c.seconds);
    }
    finish("selftest", &cfg, checks)
}
