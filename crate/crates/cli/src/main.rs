use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use kirchhoff::dynamics::{integrate_physical, m1, Scheme};
use kirchhoff::effective::{growth_report, integrate_effective, Closure, EffScheme, EffectiveModel, EffectiveState};
use kirchhoff::experiment::{default_out_dir, run_experiment, Dynamics, ExperimentConfig};
use kirchhoff::nonres::{check_nonres, make_nonresonant_with, parse_rational, rational_to_f64, Form, NonresKind};
use kirchhoff::normal_form::{phi3_scalars, ChainDirection, ChainState, Direction, NormalForm, Stage};
use kirchhoff::spectral::{read_state, u_lambda_map, write_state, PhasePolicy, StateFile};
use kirchhoff::{build_lattice, resonant_triples, Error, Result};

/// Spectral laboratory for the Kirchhoff equation on the torus.
#[derive(Parser)]
#[command(name = "kirchhoff", version)]
struct Cli {
    /// Experiment config file (key = value).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel runs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate the physical flow, from a state file or a config.
    Simulate(SimArgs),
    /// Apply one stage of the normal-form chain, or the whole chain.
    Transform(TransformArgs),
    /// Integrate the truncated shell system, from a state file or a config.
    Effective(EffArgs),
    /// Check or construct nonresonant data.
    Nonres {
        #[command(subcommand)]
        cmd: NonresCmd,
    },
    /// Run a config-driven experiment over its ε grid.
    Experiment,
}

#[derive(Args)]
struct SimArgs {
    /// Physical state file; without it `--config` is required.
    #[arg(long)]
    state: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 1.0)]
    t_end: f64,
    #[arg(long, default_value = "leapfrog")]
    scheme: String,
    #[arg(long, default_value_t = 100)]
    stride: usize,
}

#[derive(Args)]
struct TransformArgs {
    #[arg(long)]
    state: PathBuf,
    /// phi1 .. phi5, or chain.
    #[arg(long)]
    stage: String,
    /// forward or inverse. For `chain`, forward maps physical to normal.
    #[arg(long, default_value = "forward")]
    dir: String,
}

#[derive(Args)]
struct EffArgs {
    /// State file: physical (mapped to normal coordinates) or pair.
    #[arg(long)]
    state: Option<PathBuf>,
    /// Step, or `auto`.
    #[arg(long, default_value = "auto")]
    dt: String,
    #[arg(long, default_value_t = 1.0)]
    t_end: f64,
    #[arg(long, default_value = "rotframe")]
    scheme: String,
    #[arg(long, default_value = "full-P")]
    closure: String,
    #[arg(long, default_value_t = 100)]
    stride: usize,
}

#[derive(Subcommand)]
enum NonresCmd {
    /// Check a physical state; prints the report as JSON.
    Check {
        #[arg(long)]
        state: PathBuf,
        #[arg(long, default_value = "1/3")]
        c0: String,
        /// U (physical U_λ) or S (λ² S_λ in normal coordinates).
        #[arg(long, default_value = "U")]
        form: String,
    },
    /// Construct certified data; writes state.txt and certificate.json.
    Make {
        /// decreasing, power-decay:<σ>, sequential:<c0>, odd-support, primes-pattern
        #[arg(long)]
        kind: String,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        n_max: u64,
        #[arg(long)]
        eps: f64,
        /// Use seeded random phases instead of zero phases.
        #[arg(long)]
        seeded: bool,
    },
}

fn read_state_file(path: &Path) -> Result<StateFile> {
    read_state(BufReader::new(File::open(path)?))
}

fn write_state_file(path: &Path, st: &StateFile) -> Result<()> {
    write_state(st, BufWriter::new(File::create(path)?))
}

fn out_dir(cli: &Cli, fallback: PathBuf) -> Result<PathBuf> {
    let dir = cli.out.clone().unwrap_or(fallback);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json"));
}

fn load_config(cli: &Cli, force: Option<Dynamics>) -> Result<ExperimentConfig> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required here".into()))?;
    let mut cfg = ExperimentConfig::from_file(path).map_err(|e| match e {
        Error::Io(io) => Error::Config(format!("{}: {io}", path.display())),
        e => e,
    })?;
    if let Some(s) = cli.seed {
        cfg.set_seed(s);
    }
    if let Some(d) = force {
        cfg.dynamics = d;
    }
    Ok(cfg)
}

fn experiment(cli: &Cli, force: Option<Dynamics>) -> Result<()> {
    let cfg = load_config(cli, force)?;
    let dir = out_dir(cli, default_out_dir(&cfg))?;
    let m = run_experiment(&cfg, &dir)?;
    print_json(&json!({
        "out": dir,
        "config_hash": m.config_hash,
        "seed": m.seed,
        "wall_time_s": m.wall_time_s,
        "runs": m.runs.iter().map(|r| json!({
            "eps": r.eps,
            "T": r.t_end,
            "c0": r.certificate.c0,
            "growth": r.effective.as_ref().map(|e| e.growth.max_growth),
            "control_growth": r.control.as_ref().map(|e| e.growth.max_growth),
            "energy_drift": r.physical.as_ref().map(|p| p.energy_drift),
        })).collect::<Vec<_>>(),
        "growth_fit": m.growth_fit,
    }));
    Ok(())
}

fn simulate(cli: &Cli, a: &SimArgs) -> Result<()> {
    let Some(path) = &a.state else { return experiment(cli, Some(Dynamics::Physical)) };
    let StateFile::Physical(st) = read_state_file(path)? else {
        return Err(Error::InvalidArgument("simulate needs a physical state".into()));
    };
    let scheme: Scheme = a.scheme.parse()?;
    let traj = integrate_physical(&st, a.dt, a.t_end, scheme, a.stride)?;
    let dir = out_dir(cli, PathBuf::from("out"))?;
    traj.write_csv(BufWriter::new(File::create(dir.join("trajectory.csv"))?))?;
    write_state_file(&dir.join("final.state"), &StateFile::Physical(traj.last().clone()))?;
    print_json(&json!({ "snapshots": traj.times.len(), "energy_drift": traj.max_energy_drift() }));
    Ok(())
}

fn transform(cli: &Cli, a: &TransformArgs) -> Result<()> {
    let input = read_state_file(&a.state)?;
    let nf = NormalForm::new(input.lattice());
    let state = match input {
        StateFile::Physical(s) => ChainState::Physical(s),
        StateFile::Pair(p) => ChainState::Pair(p),
    };
    let out = if a.stage == "chain" {
        let dir = match a.dir.as_str() {
            "forward" => ChainDirection::ToNormal,
            "inverse" => ChainDirection::ToPhysical,
            d => return Err(Error::InvalidArgument(format!("unknown direction {d}"))),
        };
        nf.full_chain(dir, &state)?
    } else {
        let stage: Stage = a.stage.parse()?;
        let dir: Direction = a.dir.parse()?;
        nf.apply_stage(stage, dir, &state)?
    };
    let mm1 = m1(nf.lattice().dim());
    let (file, norm, scalars) = match out {
        ChainState::Physical(s) => (StateFile::Physical(s.clone()), s.energy_norm(mm1), None),
        ChainState::Pair(p) => {
            let sc = phi3_scalars(&p).ok();
            (StateFile::Pair(p.clone()), p.u.norm(mm1), sc)
        }
    };
    let dir = out_dir(cli, PathBuf::from("out"))?;
    let path = dir.join("transformed.state");
    write_state_file(&path, &file)?;
    print_json(&json!({ "stage": a.stage, "dir": a.dir, "out": path, "norm_m1": norm, "phi3": scalars }));
    Ok(())
}

fn effective(cli: &Cli, a: &EffArgs) -> Result<()> {
    let Some(path) = &a.state else { return experiment(cli, Some(Dynamics::Effective)) };
    let input = read_state_file(path)?;
    let nf = NormalForm::new(input.lattice());
    let pair = match input {
        StateFile::Physical(s) => nf.to_normal(&s)?,
        StateFile::Pair(p) => p,
    };
    let closure: Closure = a.closure.parse()?;
    let scheme: EffScheme = a.scheme.parse()?;
    let st = EffectiveState::from_pair(&pair, closure);
    let triples = resonant_triples(nf.lattice());
    let dt = if a.dt == "auto" {
        let rate = EffectiveModel::new(&st.keys(), &triples).slow_rate(&st)?;
        if rate > 0.0 {
            (0.02 / rate).min(a.t_end)
        } else {
            a.t_end
        }
    } else {
        a.dt.parse().map_err(|_| Error::InvalidArgument(format!("bad dt {}", a.dt)))?
    };
    let traj = integrate_effective(&st, &triples, dt, a.t_end, scheme, a.stride)?;
    let dir = out_dir(cli, PathBuf::from("out"))?;
    traj.write_csv(BufWriter::new(File::create(dir.join("effective.csv"))?))?;
    traj.write_triple_csv(BufWriter::new(File::create(dir.join("effective_triples.csv"))?))?;
    let rep = growth_report(&traj)?;
    serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("growth.json"))?), &rep)?;
    print_json(&json!({ "dt": dt, "snapshots": traj.times.len(), "growth": rep }));
    Ok(())
}

fn nonres(cli: &Cli, cmd: &NonresCmd) -> Result<()> {
    match cmd {
        NonresCmd::Check { state, c0, form } => {
            let input = read_state_file(state)?;
            let c0 = parse_rational(c0)?;
            let c0f = rational_to_f64(&c0);
            let triples = resonant_triples(input.lattice());
            let (values, form) = match (form.as_str(), input) {
                ("U", StateFile::Physical(s)) => (u_lambda_map(&s), Form::U),
                ("S", input) => {
                    let nf = NormalForm::new(input.lattice());
                    let pair = match input {
                        StateFile::Physical(s) => nf.to_normal(&s)?,
                        StateFile::Pair(p) => p,
                    };
                    let st = EffectiveState::from_pair(&pair, Closure::ZeroP);
                    (st.shells.iter().map(|s| (s.n, s.s)).collect(), Form::S)
                }
                ("U", StateFile::Pair(_)) => return Err(Error::InvalidArgument("U-form needs a physical state".into())),
                (f, _) => return Err(Error::InvalidArgument(format!("unknown form {f}"))),
            };
            let rep = check_nonres(&values, &triples, c0f, form)?;
            print_json(&serde_json::to_value(&rep)?);
            if !rep.pass {
                return Err(Error::Certification(format!("worst margin {:?} below c0 = {c0}", rep.worst_margin)));
            }
            Ok(())
        }
        NonresCmd::Make { kind, d, n_max, eps, seeded } => {
            let kind: NonresKind = kind.parse()?;
            let lat = build_lattice(*d, *n_max)?;
            let phases = if *seeded { PhasePolicy::Seeded(cli.seed.unwrap_or(0)) } else { PhasePolicy::Zero };
            let c = make_nonresonant_with(&kind, &lat, *eps, phases)?;
            let dir = out_dir(cli, PathBuf::from("out"))?;
            write_state_file(&dir.join("state.txt"), &StateFile::Physical(c.state))?;
            serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("certificate.json"))?), &c.certificate)?;
            print_json(&serde_json::to_value(&c.certificate)?);
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--threads: {e}")))?;
    }
    match &cli.cmd {
        Cmd::Simulate(a) => simulate(cli, a),
        Cmd::Transform(a) => transform(cli, a),
        Cmd::Effective(a) => effective(cli, a),
        Cmd::Nonres { cmd } => nonres(cli, cmd),
        Cmd::Experiment => experiment(cli, None),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
