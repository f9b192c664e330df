mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use hilbfs::calabi::{surject_fixed_volume, surject_full, FullOptions};
use hilbfs::geometry::{
    default_grid, density_ratio, fs_metric, reference_metric, veronese_model, GridShape, ManifoldModel,
};
use hilbfs::injectivity::{default_sweep_scale, inject_sweep, verify_injectivity, InjectivityOptions};
use hilbfs::linalg::{c64, max_norm, op_norm};
use hilbfs::maps::{hilb, hilb_nu, t_iterate, VolumeVariant};
use hilbfs::moments::{build_lambda_best_effort, default_floor};
use hilbfs::pushforward::{psi, psi0_closed, psi_t, solve_psi, ContinuationOptions, ScaleClass, SimplexPoint};
use hilbfs::Error;

use io::{CliError, Output};

#[derive(Parser)]
#[command(name = "hilbfs", version, about = "Hilbert and Fubini–Study maps on ℙ¹ and its Veronese embeddings")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed for every randomized run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write results into this directory instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long = "radial-nodes", global = true)]
    radial_nodes: Option<usize>,
    #[arg(long = "azimuthal-nodes", global = true)]
    azimuthal_nodes: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Manifold::P1)]
    manifold: Manifold,
    /// Also write the node table of the model used as CSV.
    #[arg(long = "dump-model", global = true)]
    dump_model: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Manifold {
    P1,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Fixed,
    Anticanonical,
    Canonical,
}

#[derive(Clone, Copy, ValueEnum)]
enum PsiMode {
    Closed,
    Integral,
    Homotopy,
}

#[derive(Clone, Copy, ValueEnum)]
enum SurjectModeArg {
    Full,
    Fixed,
    Anticanonical,
}

#[derive(Subcommand)]
enum Command {
    /// Gram matrix of a metric: Hilb or Hilb_ν.
    Hilb {
        #[arg(long)]
        k: u32,
        /// ref, bergman:FILE.json or grid:FILE.csv
        #[arg(long, default_value = "ref")]
        metric: String,
        #[arg(long, value_enum)]
        variant: Option<Variant>,
        /// Node weights (node,weight) for the fixed variant; default ω_ref.
        #[arg(long)]
        nu: Option<PathBuf>,
    },
    /// Potential of FS(H) at the nodes.
    Fs {
        #[arg(long)]
        k: u32,
        #[arg(long = "H")]
        h: PathBuf,
        /// Also write the potential as node,u CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Iterate H ↦ Hilb(FS(H)) and log the steps as CSV.
    Balance {
        #[arg(long)]
        k: u32,
        #[arg(long)]
        h0: PathBuf,
        #[arg(long, default_value_t = 50)]
        iters: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Evaluate Ψ₀, Ψ or the homotopy Ψ_t at B.
    Psi {
        #[arg(long)]
        k: u32,
        #[arg(long = "B")]
        b: PathBuf,
        #[arg(long, value_enum, default_value_t = PsiMode::Integral)]
        mode: PsiMode,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
    },
    /// Solve Ψ(B) = target by continuation from Ψ₀.
    PsiSolve {
        #[arg(long)]
        k: u32,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// CSV continuation trace (t,residual,step,newton_iters).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Moment matrix Λ with floor e^{-k} by default.
    Lambda {
        #[arg(long)]
        k: u32,
        #[arg(long)]
        floor: Option<f64>,
        #[arg(long, default_value_t = 1e-11)]
        tol: f64,
        /// CSV of the row densities (row,node,weight).
        #[arg(long)]
        densities: Option<PathBuf>,
    },
    /// Construct a metric whose Gram matrix is the target.
    Surject {
        #[arg(long)]
        k: u32,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, value_enum, default_value_t = SurjectModeArg::Full)]
        mode: SurjectModeArg,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        /// CSV of the constructed potential (node,u).
        #[arg(long = "metric-dump")]
        metric_dump: Option<PathBuf>,
    },
    /// Check the injectivity estimate for one pair of forms.
    Inject {
        #[arg(long)]
        k: u32,
        #[arg(long = "H")]
        h: PathBuf,
        #[arg(long = "Hprime")]
        h_prime: PathBuf,
        #[arg(long)]
        floor: Option<f64>,
    },
    /// Randomized pairs H2 = H^{1/2}(I + δP)H^{1/2}, one CSV row per trial.
    InjectSweep {
        #[arg(long)]
        k: u32,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long)]
        floor: Option<f64>,
    },
    /// Node table of the model as CSV.
    DumpModel {
        #[arg(long)]
        k: u32,
        #[arg(long, default_value_t = 1)]
        degree: u32,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Hilb { .. } => "hilb",
            Command::Fs { .. } => "fs",
            Command::Balance { .. } => "balance",
            Command::Psi { .. } => "psi",
            Command::PsiSolve { .. } => "psi-solve",
            Command::Lambda { .. } => "lambda",
            Command::Surject { .. } => "surject",
            Command::Inject { .. } => "inject",
            Command::InjectSweep { .. } => "inject-sweep",
            Command::DumpModel { .. } => "dump-model",
        }
    }
}

struct Ctx {
    global: Global,
    out: Output,
}

impl Ctx {
    fn model(&self, degree: u32, k: u32) -> Result<ManifoldModel, CliError> {
        let Manifold::P1 = self.global.manifold;
        if k == 0 {
            return Err(Error::Config("k must be at least 1".into()).into());
        }
        let base = default_grid(degree * k);
        let grid = GridShape {
            radial: self.global.radial_nodes.unwrap_or(base.radial),
            azimuthal: self.global.azimuthal_nodes.unwrap_or(base.azimuthal),
        };
        let m = ManifoldModel::p1(degree, k, grid)?;
        if let Some(path) = &self.global.dump_model {
            io::write_model_csv(path, &m)?;
        }
        Ok(m)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    let out = Output::new(cli.global.out.clone(), name, cli.global.seed);
    let ctx = Ctx { global: cli.global, out };
    if let Some(t) = ctx.global.threads {
        if let Err(e) = hilbfs::par::configure_threads(t) {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&ctx, &cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            if e.code == 2 {
                // numerical failures still leave a structured report
                if let Err(w) = ctx.out.report(Some(e.stage), &json!({ "error": e.message })) {
                    eprintln!("error: {}", w.message);
                }
            }
            ExitCode::from(e.code)
        }
    }
}

fn run(ctx: &Ctx, cmd: &Command) -> Result<u8, CliError> {
    match cmd {
        Command::Hilb { k, metric, variant, nu } => {
            let degree = if matches!(variant, Some(Variant::Anticanonical)) { 2 } else { 1 };
            let model = ctx.model(degree, *k)?;
            let m = match metric.as_str() {
                "ref" => reference_metric(&model),
                s if s.starts_with("bergman:") => fs_metric(&model, &io::read_form(&s["bergman:".len()..])?)?,
                s if s.starts_with("grid:") => io::read_grid_metric(&s["grid:".len()..], &model)?,
                s => return Err(CliError::usage(format!("unknown metric `{s}`"))),
            };
            let g = match variant {
                None => hilb(&model, &m)?,
                Some(v) => {
                    let vv = match v {
                        Variant::Fixed => VolumeVariant::Fixed(match nu {
                            Some(p) => io::read_density(p, &model)?,
                            None => model.reference_density(),
                        }),
                        Variant::Anticanonical => VolumeVariant::Anticanonical,
                        Variant::Canonical => VolumeVariant::Canonical,
                    };
                    hilb_nu(&model, &m, &vv)?
                }
            };
            ctx.out.json(&g)?;
            Ok(0)
        }
        Command::Fs { k, h, csv } => {
            let model = ctx.model(1, *k)?;
            let form = io::read_form(h)?;
            let m = fs_metric(&model, &form)?;
            let ratio = density_ratio(&model, &m)?;
            if let Some(p) = csv {
                io::write_potential_csv(p, m.potential())?;
            }
            ctx.out.json(&json!({
                "N": form.dim(),
                "potential": m.potential(),
                "min_density_ratio": ratio.iter().copied().fold(f64::INFINITY, f64::min),
            }))?;
            Ok(0)
        }
        Command::Balance { k, h0, iters, tol } => {
            let model = ctx.model(1, *k)?;
            let trace = t_iterate(&model, &io::read_form(h0)?, *iters, *tol)?;
            let rows: Vec<Vec<String>> = trace
                .steps
                .iter()
                .zip(&trace.trace_defects)
                .enumerate()
                .map(|(i, (s, d))| vec![i.to_string(), io::num(*s), io::num(*d)])
                .collect();
            ctx.out.csv(&["iter", "step", "trace_defect"], &rows)?;
            Ok(0)
        }
        Command::Psi { k, b, mode, t } => {
            let class = ScaleClass::new(&io::read_form(b)?)?;
            let value = match mode {
                PsiMode::Closed => psi0_closed(&class)?,
                PsiMode::Integral | PsiMode::Homotopy => {
                    let model = ctx.model(1, *k)?;
                    let ambient = veronese_model(&model);
                    if matches!(mode, PsiMode::Integral) {
                        psi(&ambient, &class)?
                    } else {
                        psi_t(&ambient, &class, *t)?
                    }
                }
            };
            ctx.out.json(&json!({
                "psi": value.form(),
                "min_eigenvalue": value.min_eigenvalue(),
            }))?;
            Ok(0)
        }
        Command::PsiSolve { k, target, steps, tol, trace } => {
            let model = ctx.model(1, *k)?;
            let ambient = veronese_model(&model);
            let target = SimplexPoint::normalized(&io::read_form(target)?)?;
            let opts = ContinuationOptions {
                steps: *steps,
                newton_tol: *tol,
                ..Default::default()
            };
            let (b, tr) = match solve_psi(&ambient, &target, &opts) {
                Ok(r) => r,
                Err(Error::Continuation { t, step, trace: partial }) => {
                    if let Some(p) = trace {
                        io::write_trace_csv(p, &partial)?;
                    }
                    return Err(CliError::numerical(
                        "continuation",
                        format!("continuation stalled at t = {t:.6} with step {step:.3e}"),
                    ));
                }
                Err(e) => return Err(e.into()),
            };
            let achieved = psi(&ambient, &b)?;
            let residual = max_norm(&(achieved.matrix() - target.matrix()));
            if let Some(p) = trace {
                io::write_trace_csv(p, &tr)?;
            }
            ctx.out.json(&json!({
                "B": b.representative(),
                "residual_max": residual,
                "trace": tr,
            }))?;
            Ok(0)
        }
        Command::Lambda { k, floor, tol, densities } => {
            let model = ctx.model(1, *k)?;
            let floor = floor.unwrap_or_else(|| default_floor(*k));
            let built = build_lambda_best_effort(&model, floor, *tol)?;
            let lam = built.lambda.map(|x| c64(x, 0.0));
            let inv_op = lam.clone().try_inverse().map(|m| op_norm(&m));
            if let Some(p) = densities {
                io::write_densities_csv(p, &built.densities)?;
            }
            let ok = built.all_converged();
            ctx.out.report(
                (!ok).then_some("moments"),
                &json!({
                    "lambda_op": op_norm(&lam),
                    "lambda_inv_op": inv_op,
                    "build": built,
                }),
            )?;
            Ok(if ok { 0 } else { 2 })
        }
        Command::Surject { k, target, mode, tol, metric_dump } => {
            let g = io::read_form(target)?;
            let result = match mode {
                SurjectModeArg::Full => {
                    let model = ctx.model(1, *k)?;
                    surject_full(&model, &g, *tol, &FullOptions::default())
                }
                SurjectModeArg::Fixed => {
                    let model = ctx.model(1, *k)?;
                    let nu = model.reference_density();
                    surject_fixed_volume(&model, &g, &VolumeVariant::Fixed(nu), *tol)
                }
                SurjectModeArg::Anticanonical => {
                    let model = ctx.model(2, *k)?;
                    surject_fixed_volume(&model, &g, &VolumeVariant::Anticanonical, *tol)
                }
            };
            let (metric, report) = result?;
            if let Some(p) = metric_dump {
                io::write_potential_csv(p, metric.potential())?;
            }
            ctx.out.report(
                (!report.pass).then_some("verify"),
                &json!({
                    "metric_dump_path": metric_dump.as_ref().map(|p| p.display().to_string()),
                    "report": report,
                }),
            )?;
            Ok(if report.pass { 0 } else { 2 })
        }
        Command::Inject { k, h, h_prime, floor } => {
            let model = ctx.model(1, *k)?;
            let mut opts = InjectivityOptions::new(*k);
            if let Some(f) = floor {
                opts.floor = *f;
            }
            let r = verify_injectivity(&model, &io::read_form(h)?, &io::read_form(h_prime)?, &opts)?;
            let ok = r.pass == Some(true);
            ctx.out.report((!ok).then_some("injectivity"), &r)?;
            Ok(if ok { 0 } else { 2 })
        }
        Command::InjectSweep { k, trials, scale, floor } => {
            let model = ctx.model(1, *k)?;
            let mut opts = InjectivityOptions::new(*k);
            if let Some(f) = floor {
                opts.floor = *f;
            }
            let delta = scale.unwrap_or_else(|| default_sweep_scale(model.n_sections()));
            let (rows, _) = inject_sweep(&model, *trials, ctx.global.seed, delta, &opts)?;
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.trial.to_string(),
                        io::num(r.epsilon),
                        io::num(r.bound),
                        io::num(r.distance),
                        match r.pass {
                            Some(p) => p.to_string(),
                            None => "withheld".into(),
                        },
                        r.hypothesis_ok.to_string(),
                        io::num(r.inv_sq_defect),
                        io::num(r.inv_sq_bound),
                        io::num(r.route_gap),
                        r.lambda_ok.to_string(),
                        r.chain_links_ok.to_string(),
                    ]
                })
                .collect();
            ctx.out.csv(
                &[
                    "trial",
                    "epsilon",
                    "bound",
                    "distance",
                    "pass",
                    "hypothesis_ok",
                    "inv_sq_defect",
                    "inv_sq_bound",
                    "route_gap",
                    "lambda_ok",
                    "chain_links_ok",
                ],
                &table,
            )?;
            let failed = rows.iter().any(|r| r.pass == Some(false));
            Ok(if failed { 2 } else { 0 })
        }
        Command::DumpModel { k, degree } => {
            let model = ctx.model(*degree, *k)?;
            let (header, rows) = io::model_table(&model);
            let refs: Vec<&str> = header.iter().map(String::as_str).collect();
            ctx.out.csv(&refs, &rows)?;
            Ok(0)
        }
    }
}
