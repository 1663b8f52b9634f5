use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use chdyn::config::{ConfigError, ExperimentConfig};
use chdyn::diagnostics::DiagnosticsRecord;
use chdyn::discretization::write_field_csv;
use chdyn::experiments::{self, Setup};
use chdyn::solver::SCHEME;
use chdyn::stationary::BvpSolution;

#[derive(Parser, Debug)]
#[command(name = "chdyn", version, about = "Cahn-Hilliard experiments with dynamic boundary conditions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `outdir`).
    #[arg(long)]
    outdir: Option<PathBuf>,
    /// Seed for randomised initial data (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweeps; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one trajectory and write snapshots and diagnostics.
    Simulate(Common),
    /// Cauchy table of the regularised solutions in N.
    ConvergeN(Common),
    /// Distances between runs from perturbed initial data.
    Lipschitz(Common),
    /// Separation margins over a sweep in N.
    Separation(Common),
    /// Paired runs with boundary forcing satisfying and violating the sign condition.
    SignCondition(Common),
    /// One-dimensional stationary problem and its critical flux.
    Stationary {
        #[command(flatten)]
        common: Common,
        /// logarithmic, power or smooth.
        #[arg(long)]
        potential: Option<String>,
        /// Prescribed boundary slope.
        #[arg(long = "K")]
        k: Option<f64>,
        /// Shooting sweep `s_min:s_max:steps`.
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Diameters of an ensemble of trajectories over time.
    Decay(Common),
}

enum Failure {
    Config(String),
    Solver(String),
    Io(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<chdyn::Error> for Failure {
    fn from(e: chdyn::Error) -> Self {
        Failure::Solver(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

/// Writes every output file of one run; the only place that touches the output directory.
struct Collector {
    dir: PathBuf,
    summary: Vec<serde_json::Value>,
}

impl Collector {
    fn new(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), summary: Vec::new() })
    }

    fn file(&self, name: &str) -> std::io::Result<BufWriter<fs::File>> {
        Ok(BufWriter::new(fs::File::create(self.dir.join(name))?))
    }

    fn text(&self, name: &str, body: &str) -> std::io::Result<()> {
        let mut w = self.file(name)?;
        w.write_all(body.as_bytes())?;
        w.flush()
    }

    fn push(&mut self, v: serde_json::Value) {
        self.summary.push(v);
    }

    fn finish(self) -> std::io::Result<()> {
        let mut w = self.file("summary.jsonl")?;
        for v in &self.summary {
            writeln!(w, "{v}")?;
        }
        w.flush()
    }
}

fn manifest(cfg: &ExperimentConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# chdyn {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "# scheme: {SCHEME}");
    s.push_str(&cfg.to_text());
    s
}

fn resolve(kind: &str, common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    let declared = cfg.get("experiment.kind").to_string();
    if !declared.is_empty() && declared != kind {
        return Err(Failure::Config(format!("config declares experiment.kind = {declared} but the command is {kind}")));
    }
    cfg.set("experiment.kind", kind)?;
    if let Some(s) = common.seed {
        cfg.set("seed", &s.to_string())?;
    }
    if let Some(o) = &common.outdir {
        cfg.set("outdir", &o.display().to_string())?;
    }
    Ok(cfg)
}

fn simulate(cfg: &ExperimentConfig, out: &mut Collector) -> Outcome {
    let setup = Setup::from_config(cfg)?;
    let rep = experiments::run_simulate(&setup)?;
    let traj = &rep.trajectory;
    for (i, s) in traj.states().enumerate() {
        let mut w = out.file(&format!("snapshot_{i}.csv"))?;
        write_field_csv(&setup.domain, &s.field, &mut w)?;
        w.flush()?;
    }
    let mut body = String::from(DiagnosticsRecord::CSV_HEADER);
    body.push('\n');
    for r in &traj.records {
        body.push_str(&r.diagnostics.csv_row());
        body.push('\n');
    }
    out.text("diagnostics.csv", &body)?;
    let last = &traj.records.last().map(|r| r.diagnostics.clone());
    out.push(json!({
        "experiment": "simulate",
        "records": traj.records.len(),
        "mass_drift": rep.mass_drift,
        "final": last,
        "dissipation_violations": rep.dissipation.as_ref().map(|d| d.violations),
        "max_energy_increase": rep.dissipation.as_ref().map(|d| d.max_increase),
    }));
    println!(
        "simulate: {} records, mass drift {:.3e}, dissipation violations {}",
        traj.records.len(),
        rep.mass_drift,
        rep.dissipation.as_ref().map_or(0, |d| d.violations)
    );
    Ok(())
}

fn converge_n(cfg: &ExperimentConfig, out: &mut Collector) -> Outcome {
    let setup = Setup::from_config(cfg)?;
    let ns = cfg.u32_list("experiment.N_list")?;
    let times = cfg.f64_list("experiment.times")?;
    let rep = experiments::run_converge_n(&setup, &ns, &times)?;
    let mut body = String::from("t,N,distance,error\n");
    for r in &rep.rows {
        let d = r.distance.map_or(String::new(), |d| format!("{d:e}"));
        let _ = writeln!(body, "{},{},{},{}", r.t, r.n, d, r.error.as_deref().unwrap_or(""));
    }
    out.text("cauchy.csv", &body)?;
    out.push(json!({ "experiment": "converge-n", "rows": rep.rows, "max_abs": rep.max_abs }));
    let failed = rep.rows.iter().filter(|r| r.distance.is_none()).count();
    println!("converge-n: {} rows, {} failed", rep.rows.len(), failed);
    Ok(())
}

fn lipschitz(cfg: &ExperimentConfig, out: &mut Collector) -> Outcome {
    let setup = Setup::from_config(cfg)?;
    let eps = cfg.f64_list("experiment.eps_list")?;
    let rep = experiments::run_lipschitz(&setup, &eps)?;
    let mut body = String::from("eps,t,distance\n");
    for r in &rep.runs {
        for (t, d) in rep.times.iter().zip(&r.distances) {
            let _ = writeln!(body, "{},{},{:e}", r.eps, t, d);
        }
    }
    out.text("lipschitz.csv", &body)?;
    for r in &rep.runs {
        out.push(json!({ "experiment": "lipschitz", "eps": r.eps, "ratio": r.ratio, "C": r.c, "K": r.k, "envelope_C": r.envelope_c }));
    }
    out.push(json!({ "experiment": "lipschitz", "ratio_table": rep.ratio_table }));
    for r in &rep.runs {
        println!("lipschitz: eps {:e}  d(T)/d(0) {:.6}  C {:.4}  K {:.4}", r.eps, r.ratio, r.c, r.k);
    }
    Ok(())
}

fn separation_csv(rows: &[experiments::SeparationRow], branch: &str, body: &mut String) {
    for r in rows {
        for i in 0..r.report.times.len() {
            let _ = writeln!(
                body,
                "{branch},{},{},{:e},{:e},{:e}",
                r.n, r.report.times[i], r.report.bulk_margin[i], r.report.boundary_margin[i], r.report.fn_l1[i]
            );
        }
    }
}

fn separation(cfg: &ExperimentConfig, out: &mut Collector) -> Outcome {
    let setup = Setup::from_config(cfg)?;
    let ns = cfg.u32_list("experiment.N_list")?;
    let rows = experiments::run_separation(&setup, &ns)?;
    let mut body = String::from("branch,N,t,bulk_margin,boundary_margin,fn_l1\n");
    separation_csv(&rows, "run", &mut body);
    out.text("separation.csv", &body)?;
    for r in &rows {
        out.push(json!({
            "experiment": "separation", "N": r.n,
            "final_bulk_margin": r.report.final_bulk_margin(),
            "final_boundary_margin": r.report.final_boundary_margin(),
            "final_gap": r.final_gap,
        }));
        println!(
            "separation: N {:>4}  boundary margin {:.6}  bulk margin {:.6}  gap {:.6}",
            r.n,
            r.report.final_boundary_margin(),
            r.report.final_bulk_margin(),
            r.final_gap
        );
    }
    Ok(())
}

fn sign_condition(cfg: &ExperimentConfig, out: &mut Collector) -> Outcome {
    let setup = Setup::from_config(cfg)?;
    let ns = cfg.u32_list("experiment.N_list")?;
    let rep = experiments::run_sign_condition(
        &setup,
        &ns,
        cfg.f64("experiment.h2_satisfied")?,
        cfg.f64("experiment.h2_violating")?,
        cfg.f64("experiment.sign_eps")?,
    )?;
    let mut body = String::from("branch,N,t,bulk_margin,boundary_margin,fn_l1\n");
    separation_csv(&rep.satisfied.rows, "satisfied", &mut body);
    separation_csv(&rep.violated.rows, "violated", &mut body);
    out.text("separation.csv", &body)?;
    let mut gaps = String::from("branch,N,final_boundary_margin,final_gap\n");
    for (name, b) in [("satisfied", &rep.satisfied), ("violated", &rep.violated)] {
        for r in &b.rows {
            let _ = writeln!(gaps, "{name},{},{:e},{:e}", r.n, r.report.final_boundary_margin(), r.final_gap);
        }
        out.push(json!({
            "experiment": "sign-condition", "branch": name, "h2": b.h2,
            "sign_condition": b.sign_condition, "K_analogue": b.k_analogue,
            "classification": b.classification,
            "final_boundary_margin": b.rows.iter().map(|r| (r.n, r.report.final_boundary_margin())).collect::<Vec<_>>(),
            "final_gap": b.rows.iter().map(|r| (r.n, r.final_gap)).collect::<Vec<_>>(),
        }));
        println!(
            "sign-condition: {name:<9} h2 {:+.3}  condition {}  K analogue {:.4}  {:?}",
            b.h2, b.sign_condition, b.k_analogue, b.classification
        );
    }
    out.text("trace_mismatch.csv", &gaps)?;
    out.push(json!({ "experiment": "sign-condition", "critical": rep.critical }));
    Ok(())
}

fn stationary(
    cfg: &mut ExperimentConfig,
    potential: Option<String>,
    k: Option<f64>,
    sweep: Option<String>,
    out: &mut Collector,
) -> Outcome {
    if let Some(p) = potential {
        cfg.set("potential.kind", &p)?;
    }
    if let Some(k) = k {
        cfg.set("experiment.K", &k.to_string())?;
    }
    if let Some(s) = sweep {
        cfg.set("experiment.sweep", &s)?;
    }
    let spec = experiments::potential_from(cfg.get("potential.kind"), cfg)?;
    let k = cfg.f64("experiment.K")?;
    if !(k >= 0.0) {
        return Err(Failure::Config(format!("experiment.K must be >= 0, got {k}")));
    }
    let sweep = match cfg.get("experiment.sweep") {
        "" => Vec::new(),
        s => experiments::parse_sweep(s).map_err(|reason| ConfigError::Invalid { key: "experiment.sweep".into(), reason })?,
    };
    let rep = experiments::run_stationary(spec, k, &sweep)?;
    let p = rep.solution.profile();
    let mut body = String::from("x,y,yp\n");
    for i in 0..p.x.len() {
        let _ = writeln!(body, "{:e},{:e},{:e}", p.x[i], p.y[i], p.yp[i]);
    }
    out.text("profile.csv", &body)?;
    if !rep.sweep.is_empty() {
        let mut body = String::from("s,time_of_flight,x_hit,y_end,yp_end,first_integral_defect\n");
        for r in &rep.sweep {
            let xh = r.x_hit.map_or(String::new(), |v| format!("{v:e}"));
            let _ = writeln!(body, "{},{:e},{},{:e},{:e},{:e}", r.s, r.time_of_flight, xh, r.y_end, r.yp_end, r.first_integral_defect);
        }
        out.text("sweep.csv", &body)?;
    }
    let (class, s, defect) = match &rep.solution {
        BvpSolution::Classical { s, .. } => ("Classical", *s, 0.0),
        BvpSolution::VariationalOnly { s_star, defect, .. } => ("VariationalOnly", *s_star, *defect),
    };
    out.push(json!({
        "experiment": "stationary", "K": k, "classification": class, "s": s, "defect": defect,
        "critical": rep.critical, "equilibrium_residual": rep.equilibrium_residual,
        "sweep_rows": rep.sweep.len(),
    }));
    let kp = match rep.critical {
        chdyn::stationary::CriticalFlux::Finite { k_plus, .. } => format!("{k_plus:.12}"),
        chdyn::stationary::CriticalFlux::NotApplicable => "n/a".into(),
    };
    println!("stationary: K {k} K+ {kp} -> {class} (s = {s:.12}, defect {defect:.6e})");
    Ok(())
}

fn decay(cfg: &ExperimentConfig, out: &mut Collector) -> Outcome {
    let setup = Setup::from_config(cfg)?;
    let size = cfg.usize("experiment.ensemble")?;
    if size == 0 {
        return Err(Failure::Config("experiment.ensemble must be >= 1".into()));
    }
    let rep = experiments::run_decay(&setup, size)?;
    let mut body = String::from("t,h1_diameter,phi_w_diameter,energy_spread\n");
    for i in 0..rep.times.len() {
        let _ = writeln!(body, "{},{:e},{:e},{:e}", rep.times[i], rep.h1_diameter[i], rep.phi_w_diameter[i], rep.energy_spread[i]);
    }
    out.text("decay.csv", &body)?;
    out.push(json!({ "experiment": "decay", "ensemble": size, "alpha": rep.alpha,
        "final_phi_w_diameter": rep.phi_w_diameter.last() }));
    println!("decay: {} members, fitted rate {:?}", size, rep.alpha);
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    let (kind, common) = match &cli.command {
        Command::Simulate(c) => ("simulate", c),
        Command::ConvergeN(c) => ("converge-n", c),
        Command::Lipschitz(c) => ("lipschitz", c),
        Command::Separation(c) => ("separation", c),
        Command::SignCondition(c) => ("sign-condition", c),
        Command::Stationary { common, .. } => ("stationary", common),
        Command::Decay(c) => ("decay", c),
    };
    let mut cfg = resolve(kind, common)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.workers)
        .build()
        .map_err(|e| Failure::Config(format!("cannot start {} workers: {e}", common.workers)))?;
    let mut out = Collector::new(Path::new(cfg.get("outdir")))?;
    pool.install(|| match cli.command {
        Command::Simulate(_) => simulate(&cfg, &mut out),
        Command::ConvergeN(_) => converge_n(&cfg, &mut out),
        Command::Lipschitz(_) => lipschitz(&cfg, &mut out),
        Command::Separation(_) => separation(&cfg, &mut out),
        Command::SignCondition(_) => sign_condition(&cfg, &mut out),
        Command::Stationary { potential, k, sweep, .. } => stationary(&mut cfg, potential, k, sweep, &mut out),
        Command::Decay(_) => decay(&cfg, &mut out),
    })?;
    // the manifest is written last so it reflects overrides applied by the command
    out.text("manifest.txt", &manifest(&cfg))?;
    out.finish()?;
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(m)) => {
            eprintln!("solver failure: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Io(m)) => {
            eprintln!("i/o error: {m}");
            ExitCode::from(1)
        }
    }
}
