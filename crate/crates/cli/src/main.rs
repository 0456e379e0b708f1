//! Command-line front end: model ingestion, one subcommand per workflow,
//! plot-ready CSV/JSON outputs plus a run manifest.

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::time::Instant;

use twoscale::averaging::mckean_vlasov_flow;
use twoscale::model::{build_model, load_model, ModelConfig};
use twoscale::probe::{
    averaging_check, counts_from_measure, exponent_probe, martingale_battery, occupation_check,
    random_tilts,
};
use twoscale::ratefn::{path_rate, write_optimizer_csv};
use twoscale::sim::{
    ensemble, occupation, simulate, tilted_model, write_path_csv, Compensator, SystemState,
    TiltSpec,
};
use twoscale::{ModelSpec, SimplexVector, ToleranceConfig};

/// Exit code for invalid configs and parse errors.
const EXIT_CONFIG: i32 = 2;
/// Exit code for runtime/module failures (and failed validation).
const EXIT_FAIL: i32 = 1;

#[derive(Parser)]
#[command(name = "twoscale", version, about = "Two-time-scale mean-field toolkit")]
struct Cli {
    /// Worker thread cap for ensemble parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Model configuration file (JSON).
    #[arg(long, conflicts_with = "builtin")]
    model: Option<PathBuf>,

    /// Built-in model name (`retrial` or `wlan`).
    #[arg(long)]
    builtin: Option<String>,

    /// Built-in parameter, `key=value`; repeatable.
    #[arg(long = "param", value_name = "K=V")]
    params: Vec<String>,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// RNG seed (falls back to TWOSCALE_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Check the model against the standing assumptions.
    Validate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Simplex sample count for the rate checks.
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
    /// Simulate one path and write path + occupation CSVs.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 100)]
        n: u64,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        /// Occupation grid step.
        #[arg(long, default_value_t = 0.01)]
        grid_step: f64,
        /// Independent replicas for the ensemble report (the CSVs always
        /// describe replica 0).
        #[arg(long, default_value_t = 1)]
        replicas: usize,
        /// Initial empirical measure, comma-separated weights (default: all
        /// particles in slow state 0).
        #[arg(long)]
        nu: Option<String>,
        /// Initial environment state index.
        #[arg(long, default_value_t = 0)]
        env: usize,
    },
    /// Integrate the averaged (McKean-Vlasov) flow and write the flow CSV.
    Ode {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 2.0)]
        horizon: f64,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long)]
        nu: Option<String>,
    },
    /// Evaluate the path rate functional along the typical or a tilted flow.
    Rate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 2.0)]
        horizon: f64,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long)]
        nu: Option<String>,
        /// Slow tilt entries, comma-separated (defaults to zero: the
        /// typical flow, whose rate vanishes).
        #[arg(long)]
        tilt_alpha: Option<String>,
        /// Fast tilt entries, comma-separated.
        #[arg(long)]
        tilt_g: Option<String>,
        /// Also dump the per-time optimisers as CSV.
        #[arg(long, default_value_t = false)]
        dump_optimizers: bool,
    },
    /// Statistical probes: averaging, occupation, exponent.
    Probe {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        /// `averaging`, `occupation` or `exponent`.
        #[arg(long)]
        kind: String,
        #[arg(long, default_value = "100,400,1600", value_name = "N1,N2,...")]
        ns: String,
        #[arg(long, default_value_t = 2.0)]
        horizon: f64,
        #[arg(long, default_value_t = 50)]
        replicas: usize,
        #[arg(long, default_value_t = 0.1)]
        window: f64,
        #[arg(long, default_value_t = 0.08)]
        delta: f64,
        #[arg(long)]
        nu: Option<String>,
        #[arg(long)]
        tilt_alpha: Option<String>,
        #[arg(long)]
        tilt_g: Option<String>,
    },
    /// Exponential-martingale battery over random small tilts.
    Martingale {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 20)]
        n: u64,
        #[arg(long, default_value_t = 0.5)]
        horizon: f64,
        #[arg(long, default_value_t = 10)]
        tilts: usize,
        #[arg(long, default_value_t = 0.2)]
        max_entry: f64,
        #[arg(long, default_value_t = 10_000)]
        replicas: usize,
        /// Drop the convex compensator term (negative control; the battery
        /// must fail).
        #[arg(long, default_value_t = false)]
        broken_compensator: bool,
        #[arg(long)]
        nu: Option<String>,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok();
    }
    let code = match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            // config errors carry their own code through `downcast`
            if e.downcast_ref::<twoscale::Error>()
                .map(|err| matches!(err, twoscale::Error::Config { .. } | twoscale::Error::Json(_)))
                .unwrap_or(false)
            {
                EXIT_CONFIG
            } else {
                EXIT_FAIL
            }
        }
    };
    std::process::exit(code);
}

fn resolve_seed(run: &RunArgs) -> u64 {
    run.seed
        .or_else(|| {
            std::env::var("TWOSCALE_SEED")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(0)
}

fn build(model_args: &ModelArgs) -> anyhow::Result<ModelSpec> {
    if let Some(path) = &model_args.model {
        return Ok(load_model(path)?);
    }
    let builtin = model_args
        .builtin
        .clone()
        .unwrap_or_else(|| "retrial".into());
    let mut params = serde_json::Map::new();
    for p in &model_args.params {
        let (k, v) = p
            .split_once('=')
            .with_context(|| format!("parameter '{p}' is not key=value"))?;
        let value: serde_json::Value = serde_json::from_str(v)
            .unwrap_or_else(|_| serde_json::Value::String(v.to_string()));
        params.insert(k.to_string(), value);
    }
    let config = ModelConfig {
        name: None,
        builtin: Some(builtin),
        params,
        slow: None,
        fast: None,
    };
    Ok(build_model(&config)?)
}

/// Everything needed to rebuild the model, inlined so a run is reproducible
/// from its manifest even if the config file moves.
fn model_manifest(args: &ModelArgs) -> serde_json::Value {
    let inline = args.model.as_ref().and_then(|p| {
        std::fs::read_to_string(p)
            .ok()
            .and_then(|text| serde_json::from_str::<serde_json::Value>(&text).ok())
    });
    json!({
        "path": args.model.as_ref().map(|p| p.display().to_string()),
        "inline": inline,
        "builtin": args.builtin,
        "params": args.params,
    })
}

fn parse_measure(text: &Option<String>, dim: usize, default_state: usize) -> anyhow::Result<SimplexVector> {
    match text {
        None => Ok(SimplexVector::point_mass(dim, default_state)),
        Some(s) => {
            let weights: Vec<f64> = s
                .split(',')
                .map(|w| w.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .context("measure entries must be numbers")?;
            if weights.len() != dim {
                bail!("measure has {} entries, model has {dim} states", weights.len());
            }
            Ok(SimplexVector::normalized(weights, 1e-9)?)
        }
    }
}

fn parse_tilt(
    alpha: &Option<String>,
    g: &Option<String>,
    nx: usize,
    ny: usize,
) -> anyhow::Result<TiltSpec> {
    let parse = |text: &Option<String>, dim: usize| -> anyhow::Result<Vec<f64>> {
        match text {
            None => Ok(vec![0.0; dim]),
            Some(s) => {
                let v: Vec<f64> = s
                    .split(',')
                    .map(|w| w.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .context("tilt entries must be numbers")?;
                if v.len() != dim {
                    bail!("tilt has {} entries, expected {dim}", v.len());
                }
                Ok(v)
            }
        }
    };
    Ok(TiltSpec::new(parse(alpha, nx)?, parse(g, ny)?)?)
}

fn parse_ns(text: &str) -> anyhow::Result<Vec<u64>> {
    text.split(',')
        .map(|w| w.trim().parse::<u64>().context("N values must be integers"))
        .collect()
}

/// Collects output files so they can be removed if the run fails midway.
struct OutputDir {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputDir {
    fn new(dir: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &[u8]) -> anyhow::Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents)?;
        self.written.push(path.clone());
        Ok(path)
    }

    fn discard(&self) {
        for path in &self.written {
            let _ = std::fs::remove_file(path);
        }
    }

    fn manifest(
        &mut self,
        command: &str,
        config: serde_json::Value,
        seed: u64,
        started: Instant,
    ) -> anyhow::Result<()> {
        let outputs: Vec<String> = self
            .written
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        let manifest = json!({
            "command": command,
            "config": config,
            "seed": seed,
            "version": env!("CARGO_PKG_VERSION"),
            "wall_time_s": started.elapsed().as_secs_f64(),
            "outputs": outputs,
        });
        self.write("run_manifest.json", serde_json::to_string_pretty(&manifest)?.as_bytes())?;
        Ok(())
    }
}

fn run(command: Command) -> anyhow::Result<i32> {
    let started = Instant::now();
    match command {
        Command::Validate { model, run, samples } => {
            let spec = build(&model)?;
            let seed = resolve_seed(&run);
            let mut out = OutputDir::new(&run.out)?;
            let report = twoscale::model::validate(&spec, samples, seed);
            out.write(
                "validation.json",
                serde_json::to_string_pretty(&report)?.as_bytes(),
            )?;
            out.manifest(
                "validate",
                json!({"model": spec.name, "model_args": model_manifest(&model), "samples": samples}),
                seed,
                started,
            )?;
            println!(
                "validate {}: passes={} min_slow={:.3e} min_fast={:.3e} lipschitz~{:.3}",
                spec.name,
                report.passes(),
                report.min_slow_rate,
                report.min_fast_rate,
                report.lipschitz_estimate
            );
            Ok(if report.passes() { 0 } else { EXIT_FAIL })
        }

        Command::Simulate {
            model,
            run,
            n,
            horizon,
            grid_step,
            replicas,
            nu,
            env,
        } => {
            let spec = build(&model)?;
            let seed = resolve_seed(&run);
            let mut out = OutputDir::new(&run.out)?;
            let result = (|| -> anyhow::Result<()> {
                let measure = parse_measure(&nu, spec.n_slow_states(), 0)?;
                let initial = SystemState::new(counts_from_measure(&measure, n), env);
                // replica 0 of the same seed, so the CSVs match the ensemble
                let path = simulate(&spec, &initial, horizon, seed)?;
                let mut csv = Vec::new();
                write_path_csv(&spec, &path, &mut csv)?;
                out.write("path.csv", &csv)?;
                let occ = occupation(&path, grid_step);
                let mut csv = Vec::new();
                occ.write_csv(&spec, &mut csv)?;
                out.write("occupation.csv", &csv)?;
                let stats =
                    ensemble(&spec, &initial, horizon, replicas, seed, |p| p.n_jumps() as f64)?;
                out.write(
                    "ensemble.json",
                    serde_json::to_string_pretty(&stats)?.as_bytes(),
                )?;
                println!(
                    "simulate {}: N={n} T={horizon} jumps={} absorbed={} (jump-count mean {:.1} over {replicas} replicas)",
                    spec.name,
                    path.n_jumps(),
                    path.absorbed,
                    stats.mean
                );
                Ok(())
            })();
            match result {
                Ok(()) => {
                    out.manifest(
                        "simulate",
                        json!({"model": spec.name, "model_args": model_manifest(&model), "n": n,
                               "horizon": horizon, "grid_step": grid_step,
                               "replicas": replicas, "env": env}),
                        seed,
                        started,
                    )?;
                    Ok(0)
                }
                Err(e) => {
                    out.discard();
                    Err(e)
                }
            }
        }

        Command::Ode {
            model,
            run,
            horizon,
            step,
            nu,
        } => {
            let spec = build(&model)?;
            let seed = resolve_seed(&run);
            let mut out = OutputDir::new(&run.out)?;
            let result = (|| -> anyhow::Result<()> {
                let measure = parse_measure(&nu, spec.n_slow_states(), 0)?;
                let tol = ToleranceConfig::default();
                let flow = mckean_vlasov_flow(&spec, &measure, horizon, step, &tol)?;
                let mut csv = Vec::new();
                flow.write_csv(&spec, &mut csv)?;
                out.write("flow.csv", &csv)?;
                println!(
                    "ode {}: T={horizon} step={step} terminal={:?}",
                    spec.name,
                    flow.mu.last().unwrap().as_slice()
                );
                Ok(())
            })();
            match result {
                Ok(()) => {
                    out.manifest(
                        "ode",
                        json!({"model": spec.name, "model_args": model_manifest(&model),
                               "horizon": horizon, "step": step}),
                        seed,
                        started,
                    )?;
                    Ok(0)
                }
                Err(e) => {
                    out.discard();
                    Err(e)
                }
            }
        }

        Command::Rate {
            model,
            run,
            horizon,
            step,
            nu,
            tilt_alpha,
            tilt_g,
            dump_optimizers,
        } => {
            let spec = build(&model)?;
            let seed = resolve_seed(&run);
            let mut out = OutputDir::new(&run.out)?;
            let result = (|| -> anyhow::Result<f64> {
                let measure = parse_measure(&nu, spec.n_slow_states(), 0)?;
                let tilt = parse_tilt(&tilt_alpha, &tilt_g, spec.n_slow_states(), spec.n_fast_states())?;
                let tol = ToleranceConfig {
                    quadrature_step: step,
                    ..ToleranceConfig::default()
                };
                // the flow of the (possibly) tilted model, rated under the
                // original model
                let flow_model = tilted_model(&spec, &tilt)?;
                let flow = mckean_vlasov_flow(&flow_model, &measure, horizon, step, &tol)?;
                let report = path_rate(&spec, &flow.mu, &flow.pi, flow.step, &tol)?;
                out.write(
                    "rate.json",
                    serde_json::to_string_pretty(&report)?.as_bytes(),
                )?;
                if dump_optimizers {
                    let mut csv = Vec::new();
                    write_optimizer_csv(&spec, &flow.mu, &flow.pi, flow.step, &tol, &mut csv)?;
                    out.write("optimizers.csv", &csv)?;
                }
                println!(
                    "rate {}: J_total={:.6e} slow={:.6e} fast={:.6e}",
                    spec.name, report.j_total, report.slow_part, report.fast_part
                );
                Ok(report.j_total)
            })();
            match result {
                Ok(_) => {
                    out.manifest(
                        "rate",
                        json!({"model": spec.name, "model_args": model_manifest(&model),
                               "horizon": horizon, "step": step}),
                        seed,
                        started,
                    )?;
                    Ok(0)
                }
                Err(e) => {
                    out.discard();
                    Err(e)
                }
            }
        }

        Command::Probe {
            model,
            run,
            kind,
            ns,
            horizon,
            replicas,
            window,
            delta,
            nu,
            tilt_alpha,
            tilt_g,
        } => {
            let spec = build(&model)?;
            let seed = resolve_seed(&run);
            let mut out = OutputDir::new(&run.out)?;
            let tol = ToleranceConfig::default();
            let measure = parse_measure(&nu, spec.n_slow_states(), 0)?;
            let ns = parse_ns(&ns)?;
            let result = (|| -> anyhow::Result<String> {
                match kind.as_str() {
                    "averaging" => {
                        let report =
                            averaging_check(&spec, &measure, &ns, horizon, replicas, seed, &tol)?;
                        out.write(
                            "averaging.json",
                            serde_json::to_string_pretty(&report)?.as_bytes(),
                        )?;
                        Ok(format!("medians {:?}", report.median_dev))
                    }
                    "occupation" => {
                        let n = *ns.last().unwrap_or(&500);
                        let report =
                            occupation_check(&spec, &measure, n, horizon, window, replicas, seed)?;
                        out.write(
                            "occupation.json",
                            serde_json::to_string_pretty(&report)?.as_bytes(),
                        )?;
                        Ok(format!("median sup-window TV {:.4}", report.median_sup_tv))
                    }
                    "exponent" => {
                        let tilt = parse_tilt(
                            &tilt_alpha,
                            &tilt_g,
                            spec.n_slow_states(),
                            spec.n_fast_states(),
                        )?;
                        let report = exponent_probe(
                            &spec, &measure, &tilt, delta, &ns, horizon, replicas, seed, &tol,
                        )?;
                        out.write(
                            "exponent.json",
                            serde_json::to_string_pretty(&report)?.as_bytes(),
                        )?;
                        let mut csv = String::from("n,hits,replicas,estimate,lower_bound_only\n");
                        for i in 0..report.ns.len() {
                            csv.push_str(&format!(
                                "{},{},{},{},{}\n",
                                report.ns[i],
                                report.hits[i],
                                report.replicas,
                                report.estimates[i],
                                report.lower_bound_only[i]
                            ));
                        }
                        out.write("tube_hits.csv", csv.as_bytes())?;
                        Ok(format!(
                            "predicted {:.5e}, estimates {:?}",
                            report.predicted, report.estimates
                        ))
                    }
                    other => bail!("unknown probe kind '{other}'"),
                }
            })();
            match result {
                Ok(summary) => {
                    out.manifest(
                        "probe",
                        json!({"model": spec.name, "model_args": model_manifest(&model), "kind": kind,
                               "ns": ns, "horizon": horizon, "replicas": replicas,
                               "window": window, "delta": delta}),
                        seed,
                        started,
                    )?;
                    println!("probe {kind}: {summary}");
                    Ok(0)
                }
                Err(e) => {
                    out.discard();
                    Err(e)
                }
            }
        }

        Command::Martingale {
            model,
            run,
            n,
            horizon,
            tilts,
            max_entry,
            replicas,
            broken_compensator,
            nu,
        } => {
            let spec = build(&model)?;
            let seed = resolve_seed(&run);
            let mut out = OutputDir::new(&run.out)?;
            let result = (|| -> anyhow::Result<bool> {
                let measure = parse_measure(&nu, spec.n_slow_states(), 0)?;
                let initial = SystemState::new(counts_from_measure(&measure, n), 0);
                let tilt_list = random_tilts(
                    spec.n_slow_states(),
                    spec.n_fast_states(),
                    tilts,
                    max_entry,
                    seed ^ 0x7115,
                );
                let compensator = if broken_compensator {
                    Compensator::DropSlowTau
                } else {
                    Compensator::Exact
                };
                let report = martingale_battery(
                    &spec, &initial, horizon, &tilt_list, replicas, seed, compensator,
                )?;
                out.write(
                    "martingale.json",
                    serde_json::to_string_pretty(&report)?.as_bytes(),
                )?;
                for r in &report.results {
                    println!(
                        "tilt |z|={:.2} mean={:.5} stderr={:.2e}{}",
                        r.z.abs(),
                        r.mean,
                        r.stderr,
                        if r.variance_overflow { " [variance overflow]" } else { "" }
                    );
                }
                println!(
                    "martingale battery: pass fraction {:.2} => {}",
                    report.pass_fraction,
                    if report.passes { "PASS" } else { "FAIL" }
                );
                Ok(report.passes)
            })();
            match result {
                Ok(passes) => {
                    out.manifest(
                        "martingale",
                        json!({"model": spec.name, "model_args": model_manifest(&model), "n": n,
                               "horizon": horizon, "tilts": tilts, "max_entry": max_entry,
                               "replicas": replicas, "broken_compensator": broken_compensator}),
                        seed,
                        started,
                    )?;
                    Ok(if passes { 0 } else { EXIT_FAIL })
                }
                Err(e) => {
                    out.discard();
                    Err(e)
                }
            }
        }
    }
}
