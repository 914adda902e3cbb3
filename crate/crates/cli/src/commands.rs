use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use chlag::evolution::{evolve, evolve_to, EvolveConfig};
use chlag::metric::{j_upper, lipschitz_experiment, MetricReport, SearchConfig};
use chlag::nonlocal::{qp_fast, qp_reference, relative_deviation};
use chlag::peakons::{aligned_lagrangian, evolve_peakons, sample_u, PeakonState};
use chlag::projection::pi;
use chlag::samples::{peakon_pair_ensemble, smooth_state};
use chlag::toymetric::{
    riemannian_distance, solve_sqrtlaw, toy_d, toy_j, toy_jbar, toy_jbar_counterexample,
};
use chlag::transforms::{default_plateau_eps, to_eulerian, to_lagrangian};
use chlag::{EulerianState, LagrangianState};

use crate::config::{read_json, write_json, ExperimentConfig, Initial, SimulateConfig};
use crate::{
    BenchArgs, Command, MetricArgs, PeakonArgs, SimulateArgs, Target, ToyCommand, TransformArgs,
};

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Transform(a) => transform(a),
        Command::Metric(a) => metric(a),
        Command::Peakon(a) => peakon(a),
        Command::Toy {
            command: ToyCommand::Demo { seed },
        } => toy_demo(seed),
        Command::Bench(a) => bench(a),
    }
}

/// Saves the state carried by an integration failure into `dir` before passing the error on.
fn keep_snapshot<T>(r: chlag::Result<T>, dir: &Path) -> Result<T> {
    if let Err(chlag::Error::Integration { snapshot, .. }) = &r {
        let path = dir.join("failure_snapshot.json");
        match write_json(&path, snapshot) {
            Ok(()) => eprintln!("diagnostic snapshot written to {}", path.display()),
            Err(e) => eprintln!("could not write diagnostic snapshot: {e:#}"),
        }
    }
    Ok(r?)
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn load_lagrangian(path: &Path) -> Result<LagrangianState> {
    let x: LagrangianState = read_json(path)?;
    x.validate()
        .with_context(|| format!("invalid state in {}", path.display()))?;
    Ok(x)
}

fn load_eulerian(path: &Path) -> Result<EulerianState> {
    let e: EulerianState = read_json(path)?;
    e.validate()
        .with_context(|| format!("invalid state in {}", path.display()))?;
    Ok(e)
}

fn initial_state(cfg: &SimulateConfig) -> Result<LagrangianState> {
    let x = match &cfg.initial {
        Initial::Peakons { p, q, aligned } => {
            let s = PeakonState::new(p.clone(), q.clone())?;
            if *aligned {
                aligned_lagrangian(&s, cfg.n)?
            } else {
                to_lagrangian(&sample_u(&s, cfg.n), cfg.n)?
            }
        }
        Initial::Smooth { amplitude } => {
            chlag::state::check_grid_size(cfg.n)?;
            smooth_state(cfg.n, cfg.seed, *amplitude)
        }
        Initial::Lagrangian { path } => load_lagrangian(path)?,
        Initial::Eulerian { path } => to_lagrangian(&load_eulerian(path)?, cfg.n)?,
    };
    if x.n != cfg.n {
        bail!("initial state has n = {}, config asks for {}", x.n, cfg.n);
    }
    Ok(x)
}

#[derive(Serialize)]
struct DiagnosticsRow {
    t: f64,
    h: f64,
    umax: f64,
    min_yxi: f64,
    compat_residual: f64,
}

#[derive(Serialize)]
struct RunRecord<'a> {
    config: &'a SimulateConfig,
    seed: u64,
    snapshots: usize,
    t_star: Option<f64>,
    energy_drift: f64,
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg: SimulateConfig = read_json(&args.config)?;
    if let Some(out) = args.out {
        cfg.out_dir = Some(out);
    }
    cfg.check()?;
    let out = cfg
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("ch-out"));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let x0 = initial_state(&cfg)?;
    let ecfg = EvolveConfig::new(cfg.dt, cfg.t_end).every(cfg.snapshot_every);
    let traj = keep_snapshot(evolve(&x0, &ecfg), &out)?;

    for (k, s) in traj.snapshots.iter().enumerate() {
        write_json(&out.join(format!("snap_{k:06}.json")), s)?;
    }
    let mut w = csv::Writer::from_path(out.join("diagnostics.csv"))?;
    for d in &traj.diagnostics {
        w.serialize(DiagnosticsRow {
            t: d.t,
            h: d.h,
            umax: d.umax,
            min_yxi: d.min_yxi,
            compat_residual: d.compat_residual,
        })?;
    }
    w.flush()?;
    let record = RunRecord {
        config: &cfg,
        seed: cfg.seed,
        snapshots: traj.snapshots.len(),
        t_star: traj.collision_time(),
        energy_drift: traj.energy_drift(),
    };
    write_json(&out.join("run.json"), &record)?;
    eprintln!(
        "{} snapshots in {}, energy drift {:.3e}",
        record.snapshots,
        out.display(),
        record.energy_drift
    );
    Ok(())
}

fn transform(args: TransformArgs) -> Result<()> {
    match args.to {
        Target::Eulerian => {
            let x = load_lagrangian(&args.input)?;
            let m = args.m.unwrap_or(x.n);
            if m == 0 {
                bail!("m must be positive");
            }
            write_json(&args.out, &to_eulerian(&x, m, default_plateau_eps(&x)))
        }
        Target::Lagrangian => {
            let e = load_eulerian(&args.input)?;
            write_json(&args.out, &to_lagrangian(&e, args.n.unwrap_or(e.m))?)
        }
        Target::Projected => {
            let x = load_lagrangian(&args.input)?;
            write_json(&args.out, &pi(&x)?)
        }
    }
}

#[derive(Serialize)]
struct ExperimentRecord<'a> {
    config: &'a ExperimentConfig,
    seed: u64,
    skipped: &'a [usize],
    max_ratio: f64,
    log_slope: f64,
    max_enorm_ratio: f64,
    max_h1_ratio: f64,
}

fn metric(args: MetricArgs) -> Result<()> {
    if let Some(path) = &args.experiment {
        let out = args.out.as_deref().expect("clap requires --out");
        return experiment(path, out);
    }
    let (Some(a), Some(b)) = (&args.a, &args.b) else {
        bail!("--a and --b are both required");
    };
    let (xa, xb) = (load_lagrangian(a)?, load_lagrangian(b)?);
    let search: SearchConfig = match &args.search {
        Some(p) => read_json(p)?,
        None => SearchConfig::default(),
    };
    let report: MetricReport = j_upper(&xa, &xb, &search)?;
    match &args.out {
        Some(out) => write_json(out, &report),
        None => {
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
    }
}

fn experiment(path: &Path, out: &Path) -> Result<()> {
    let cfg: ExperimentConfig = read_json(path)?;
    cfg.check()?;
    let pairs = peakon_pair_ensemble(cfg.n, cfg.pairs, cfg.perturbation, cfg.seed)?;
    let ecfg = EvolveConfig::new(cfg.dt, *cfg.times.last().expect("checked nonempty"));
    let summary = keep_snapshot(
        lipschitz_experiment(&pairs, &cfg.times, &ecfg, &cfg.search),
        &parent_dir(out),
    )?;

    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["pair_id", "t", "j0", "jt", "ratio"])?;
    for r in &summary.rows {
        w.write_record([
            r.pair_id.to_string(),
            r.t.to_string(),
            r.j0.to_string(),
            r.jt.to_string(),
            r.ratio.to_string(),
        ])?;
    }
    w.flush()?;
    let record = ExperimentRecord {
        config: &cfg,
        seed: cfg.seed,
        skipped: &summary.skipped,
        max_ratio: summary.max_ratio,
        log_slope: summary.log_slope,
        max_enorm_ratio: summary.max_enorm_ratio,
        max_h1_ratio: summary.max_h1_ratio,
    };
    write_json(&out.with_extension("summary.json"), &record)?;
    eprintln!(
        "{} rows, max ratio {:.4}, log slope {:.4}",
        summary.rows.len(),
        summary.max_ratio,
        summary.log_slope
    );
    Ok(())
}

fn peakon(args: PeakonArgs) -> Result<()> {
    if args.p.len() != args.q.len() {
        bail!("--p has {} entries, --q has {}", args.p.len(), args.q.len());
    }
    if args.every == 0 {
        bail!("--every must be at least 1");
    }
    let s0 = PeakonState::new(args.p, args.q)?;
    let traj = evolve_peakons(&s0, args.dt, args.t_end)?;
    let k = s0.p.len();
    let mut w = csv::Writer::from_path(&args.out)?;
    let mut header = vec!["t".to_string()];
    header.extend((0..k).map(|i| format!("p_{i}")));
    header.extend((0..k).map(|i| format!("q_{i}")));
    header.push("hamiltonian".into());
    w.write_record(&header)?;
    let last = traj.states.len() - 1;
    for (i, s) in traj.states.iter().enumerate() {
        if i % args.every != 0 && i != last {
            continue;
        }
        let mut row = vec![s.t.to_string()];
        row.extend(s.p.iter().map(f64::to_string));
        row.extend(s.q.iter().map(f64::to_string));
        row.push(s.hamiltonian().to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    if let Some(t) = traj.near_collision {
        eprintln!("note: peakons nearly collide at t = {t:.6}; integration stopped there");
    }
    Ok(())
}

fn toy_demo(seed: u64) -> Result<()> {
    println!("{:<48} {:>14} {:>14}", "quantity", "value", "reference");
    let row = |name: &str, v: f64, r: f64| println!("{name:<48} {v:>14.8} {r:>14.8}");
    let note = |name: &str, v: f64, r: &str| println!("{name:<48} {v:>14.8} {r:>14}");

    println!("-- square-root law x' = |x|^(1/2)");
    for t in [0.5, 1.0, 2.0] {
        row(
            &format!("x(t) from x0 = 0, t = {t}"),
            solve_sqrtlaw(0.0, t),
            t * t / 4.0,
        );
    }

    println!("-- J contracts along the flow");
    let (x0, xb) = (0.01, 1.0);
    let j0 = toy_j(x0, xb)?;
    row("J(0.01, 1)", j0, j0);
    for t in [0.5, 1.0, 2.0] {
        let jt = toy_j(solve_sqrtlaw(x0, t), solve_sqrtlaw(xb, t))?;
        note(
            &format!("J(x(t), xb(t)), t = {t}"),
            jt,
            if jt <= j0 { "<= J(0)" } else { "> J(0)" },
        );
    }

    println!("-- chains of J from 1 to 4");
    let d = riemannian_distance(1.0, 4.0);
    row("J(1, 4)", toy_j(1.0, 4.0)?, d);
    for k in [1, 4, 16, 64, 256] {
        row(
            &format!("toy_d(1, 4), {k} intermediate points"),
            toy_d(1.0, 4.0, k)?,
            d,
        );
    }

    let r = toy_jbar_counterexample(10.0, 4.0, seed)?;
    println!("-- Jbar = |x - xb| / sqrt(max)");
    let (a, b, c) = r.triple;
    row(&format!("Jbar({a}, {c})"), r.jbar_13, r.jbar_12_plus_23);
    note(
        &format!("Jbar({a}, {b}) + Jbar({b}, {c})"),
        r.jbar_12_plus_23,
        if r.jbar_13 < r.jbar_12_plus_23 {
            "strict"
        } else {
            "not strict"
        },
    );
    row(
        &format!("J({a}, {c}) vs J({a}, {b}) + J({b}, {c})"),
        r.j_13,
        r.j_12_plus_23,
    );
    row(
        "Jbar(1, 4) vs Riemannian distance",
        r.jbar_1_4,
        r.riemannian_1_4,
    );
    row(
        "shortest random Jbar chain 1 -> 4",
        r.best_random_chain_1_4,
        r.riemannian_1_4,
    );
    let (gx, gb, gt) = r.growth_witness;
    note(
        &format!("max Jbar growth (x0 {gx:.1e}, xb0 {gb:.1e}, t {gt})"),
        r.max_growth,
        if r.growth_exceeds_bound {
            "> 10"
        } else {
            "< 10"
        },
    );
    row("toy_jbar(1, 4)", toy_jbar(1.0, 4.0)?, r.jbar_1_4);
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    if args.reps == 0 {
        bail!("--reps must be at least 1");
    }
    let ms = |f: &mut dyn FnMut() -> Result<()>| -> Result<f64> {
        let mut best = f64::INFINITY;
        for _ in 0..args.reps {
            let t = Instant::now();
            f()?;
            best = best.min(t.elapsed().as_secs_f64() * 1e3);
        }
        Ok(best)
    };
    println!(
        "{:>8} {:>12} {:>14} {:>12} {:>12}",
        "n", "qp_fast ms", "qp_reference ms", "deviation", "rk4 step ms"
    );
    for &n in &args.n {
        chlag::state::check_grid_size(n)?;
        let x = smooth_state(n, 1, 0.5);
        let fast = ms(&mut || Ok(qp_fast(&x).map(drop)?))?;
        let (reference, dev) = if n <= 8192 {
            let r = ms(&mut || Ok(qp_reference(&x).map(drop)?))?;
            (
                format!("{r:.3}"),
                format!(
                    "{:.2e}",
                    relative_deviation(&qp_fast(&x)?, &qp_reference(&x)?)
                ),
            )
        } else {
            ("-".into(), "-".into())
        };
        let dt = 1e-3;
        let step = ms(&mut || Ok(evolve_to(&x, dt, dt).map(drop)?))?;
        println!("{n:>8} {fast:>12.3} {reference:>15} {dev:>12} {step:>12.3}");
    }
    Ok(())
}
