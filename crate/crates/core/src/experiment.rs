//! Config-driven ε-scaling experiments.
//!
//! Config grammar: one `key = value` per line, `#` starts a comment, blank
//! lines ignored. Keys carry a section prefix; unknown keys are errors.
//!
//! ```text
//! name                  = label used in the manifest            (default "experiment")
//! lattice.d             = 1
//! lattice.n_max         = 64
//! data.kind             = decreasing | power-decay:<σ> | sequential:<c0> | odd-support | primes-pattern
//! data.c0               = required nonresonance constant, rational   (default: the kind's own)
//! data.phases           = zero | seeded                              (default zero)
//! run.eps               = comma separated, strictly decreasing
//! run.dynamics          = physical | effective | both                 (default effective)
//! run.horizon.p         = 0 | 2 | 4 | 6        T = A · c0 · ε^{-p}
//! run.horizon.A         = positive real                               (default 1)
//! run.seed              = integer                                     (default 0)
//! run.physical.scheme   = leapfrog | rk4                              (default leapfrog)
//! run.physical.dt       = step                                        (default 1e-3)
//! run.physical.stride   = snapshot stride                             (default 100)
//! run.effective.scheme  = rotframe | rk4                              (default rotframe)
//! run.effective.closure = full-P | zero-P                             (default full-P)
//! run.effective.dt      = step, or `auto` = phase_step / rate(0)      (default auto)
//! run.effective.phase_step = 0.02
//! run.effective.stride  = 200
//! run.control           = none | resonant                             (default none)
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_rational::BigRational;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::dynamics::{integrate_physical, Scheme};
use crate::effective::{
    growth_report, integrate_effective, Closure, EffScheme, EffectiveModel, EffectiveState, GrowthReport,
};
use crate::lattice::{build_lattice, resonant_triples, Lattice, TripleSet};
use crate::nonres::{check_nonres, make_nonresonant_with, parse_rational, Certificate, Form, NonresKind};
use crate::normal_form::NormalForm;
use crate::spectral::{u_lambda, PhasePolicy};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Dynamics {
    Physical,
    Effective,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Control {
    None,
    Resonant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum EffStep {
    Auto { phase_step: f64 },
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub name: String,
    pub d: usize,
    pub n_max: u64,
    pub kind: NonresKind,
    pub c0: Option<BigRational>,
    pub seeded_phases: bool,
    pub eps: Vec<f64>,
    pub dynamics: Dynamics,
    pub horizon_p: i32,
    pub horizon_a: f64,
    pub seed: u64,
    pub phys_scheme: Scheme,
    pub phys_dt: f64,
    pub phys_stride: usize,
    pub eff_scheme: EffScheme,
    pub closure: Closure,
    pub eff_step: EffStep,
    pub eff_stride: usize,
    pub control: Control,
    raw: BTreeMap<String, String>,
}

const KEYS: &[&str] = &[
    "name",
    "lattice.d",
    "lattice.n_max",
    "data.kind",
    "data.c0",
    "data.phases",
    "run.eps",
    "run.dynamics",
    "run.horizon.p",
    "run.horizon.A",
    "run.seed",
    "run.physical.scheme",
    "run.physical.dt",
    "run.physical.stride",
    "run.effective.scheme",
    "run.effective.closure",
    "run.effective.dt",
    "run.effective.phase_step",
    "run.effective.stride",
    "run.control",
];

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| cfg_err(format!("{key}: cannot parse `{v}`")))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let mut raw = BTreeMap::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| cfg_err(format!("line {}: expected key = value", ln + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(cfg_err(format!("line {}: unknown key `{k}`", ln + 1)));
            }
            if raw.insert(k.to_string(), v.to_string()).is_some() {
                return Err(cfg_err(format!("line {}: duplicate key `{k}`", ln + 1)));
            }
        }
        Self::from_map(raw)
    }

    pub fn from_file(path: &Path) -> Result<ExperimentConfig> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn from_map(raw: BTreeMap<String, String>) -> Result<ExperimentConfig> {
        let get = |k: &str| raw.get(k).map(String::as_str);
        let req = |k: &str| get(k).ok_or_else(|| cfg_err(format!("missing key `{k}`")));
        let d: usize = parse_num("lattice.d", req("lattice.d")?)?;
        let n_max: u64 = parse_num("lattice.n_max", req("lattice.n_max")?)?;
        let kind: NonresKind = req("data.kind")?.parse().map_err(|e: Error| cfg_err(format!("data.kind: {e}")))?;
        let c0 = get("data.c0").map(parse_rational).transpose().map_err(|e| cfg_err(format!("data.c0: {e}")))?;
        let seeded_phases = match get("data.phases").unwrap_or("zero") {
            "zero" => false,
            "seeded" => true,
            v => return Err(cfg_err(format!("data.phases: `{v}`"))),
        };
        let eps = req("run.eps")?
            .split(',')
            .map(|s| parse_num::<f64>("run.eps", s.trim()))
            .collect::<Result<Vec<_>>>()?;
        if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0)) {
            return Err(cfg_err("run.eps: need positive values"));
        }
        if eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(cfg_err("run.eps: grid must be strictly decreasing"));
        }
        let dynamics = match get("run.dynamics").unwrap_or("effective") {
            "physical" => Dynamics::Physical,
            "effective" => Dynamics::Effective,
            "both" => Dynamics::Both,
            v => return Err(cfg_err(format!("run.dynamics: `{v}`"))),
        };
        let horizon_p: i32 = parse_num("run.horizon.p", req("run.horizon.p")?)?;
        if ![0, 2, 4, 6].contains(&horizon_p) {
            return Err(cfg_err("run.horizon.p must be 0, 2, 4 or 6"));
        }
        let horizon_a: f64 = get("run.horizon.A").map_or(Ok(1.0), |v| parse_num("run.horizon.A", v))?;
        if !(horizon_a > 0.0) {
            return Err(cfg_err("run.horizon.A must be positive"));
        }
        let seed = get("run.seed").map_or(Ok(0), |v| parse_num("run.seed", v))?;
        let phys_scheme = get("run.physical.scheme")
            .map_or(Ok(Scheme::Leapfrog), |v| v.parse())
            .map_err(|e| cfg_err(format!("run.physical.scheme: {e}")))?;
        let phys_dt = get("run.physical.dt").map_or(Ok(1e-3), |v| parse_num("run.physical.dt", v))?;
        let phys_stride = get("run.physical.stride").map_or(Ok(100), |v| parse_num("run.physical.stride", v))?;
        let eff_scheme = get("run.effective.scheme")
            .map_or(Ok(EffScheme::Rotframe), |v| v.parse())
            .map_err(|e| cfg_err(format!("run.effective.scheme: {e}")))?;
        let closure = get("run.effective.closure")
            .map_or(Ok(Closure::FullP), |v| v.parse())
            .map_err(|e| cfg_err(format!("run.effective.closure: {e}")))?;
        let phase_step = get("run.effective.phase_step").map_or(Ok(0.02), |v| parse_num("run.effective.phase_step", v))?;
        let eff_step = match get("run.effective.dt").unwrap_or("auto") {
            "auto" => EffStep::Auto { phase_step },
            v => EffStep::Fixed(parse_num("run.effective.dt", v)?),
        };
        let eff_stride = get("run.effective.stride").map_or(Ok(200), |v| parse_num("run.effective.stride", v))?;
        if phys_stride == 0 || eff_stride == 0 {
            return Err(cfg_err("strides must be positive"));
        }
        let control = match get("run.control").unwrap_or("none") {
            "none" => Control::None,
            "resonant" => Control::Resonant,
            v => return Err(cfg_err(format!("run.control: `{v}`"))),
        };
        Ok(ExperimentConfig {
            name: get("name").unwrap_or("experiment").to_string(),
            d,
            n_max,
            kind,
            c0,
            seeded_phases,
            eps,
            dynamics,
            horizon_p,
            horizon_a,
            seed,
            phys_scheme,
            phys_dt,
            phys_stride,
            eff_scheme,
            closure,
            eff_step,
            eff_stride,
            control,
            raw,
        })
    }

    /// Override the seed (the CLI `--seed` flag); keeps the canonical text in sync.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.raw.insert("run.seed".into(), seed.to_string());
    }

    /// Sorted `key = value` lines, the input of [`Self::hash`].
    pub fn canonical(&self) -> String {
        self.raw.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Hex SHA-256 of the canonical text.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `T = A · c0 · ε^{-p}`, with the kind's certified `c0` when none is given.
    pub fn horizon(&self, eps: f64, c0: f64) -> f64 {
        self.horizon_a * c0 * eps.powi(-self.horizon_p)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScalingFit {
    pub exponent: f64,
    /// Standard error of the slope; zero for two points.
    pub width: f64,
}

/// Least-squares slope of `ln q` against `ln ε`.
pub fn fit_scaling(series: &[(f64, f64)]) -> Result<ScalingFit> {
    if series.len() < 2 {
        return Err(Error::InvalidArgument("need at least two points".into()));
    }
    if series.iter().any(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(Error::InvalidArgument("fit needs positive values".into()));
    }
    let n = series.len() as f64;
    let xs: Vec<f64> = series.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = series.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("fit needs distinct abscissae".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let width = if series.len() > 2 {
        let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
        (ssr / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(ScalingFit { exponent: slope, width })
}

/// Two-shell state on the first triple `(a, a, l)`, tuned to `ω = 0` with
/// `θ` maximal (`B_a` real, `B_l` imaginary), rescaled so that
/// `Σ λ^{2m₁} S_λ = norm²`.
pub fn resonant_control(template: &EffectiveState, triples: &TripleSet, m1: f64, norm: f64) -> Result<EffectiveState> {
    let keys = template.keys();
    let t = triples
        .iter()
        .find(|t| t.a == t.b && keys.contains(&t.a) && keys.contains(&t.l))
        .ok_or_else(|| Error::InvalidArgument("lattice has no triple (a, a, l) for a resonant control".into()))?;
    let s_a = 1.0;
    let s_l = 2.0 * t.a as f64 * s_a / t.l as f64;
    let size = s_a * (t.a as f64).powf(m1) + s_l * (t.l as f64).powf(m1);
    let k = norm * norm / size;
    let mut st = template.clone();
    for sh in st.shells.iter_mut() {
        let (s, b) = if sh.n == t.a {
            (s_a, C64::new(s_a, 0.0))
        } else if sh.n == t.l {
            (s_l, C64::new(0.0, s_l))
        } else {
            (0.0, C64::new(0.0, 0.0))
        };
        sh.s = s * k;
        sh.b = b * k;
    }
    Ok(st)
}

#[derive(Debug, Clone, Serialize)]
pub struct PhysicalSummary {
    pub csv: String,
    pub dt: f64,
    pub energy_drift: f64,
    /// `max_t max_λ |U_λ(t)/U_λ(0) − 1|` over populated shells.
    pub max_u_change: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EffectiveSummary {
    pub csv: String,
    pub triple_csv: String,
    pub dt: f64,
    pub growth: GrowthReport,
    pub momentum_drift: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub eps: f64,
    pub t_end: f64,
    pub seed: u64,
    pub config_hash: String,
    pub certificate: Certificate,
    pub physical: Option<PhysicalSummary>,
    pub effective: Option<EffectiveSummary>,
    pub control: Option<EffectiveSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub name: String,
    pub config_hash: String,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub version: String,
    pub wall_time_s: f64,
    pub runs: Vec<RunSummary>,
    /// Fit of effective max growth against ε.
    pub growth_fit: Option<ScalingFit>,
    pub control_growth_fit: Option<ScalingFit>,
}

fn run_effective(
    cfg: &ExperimentConfig,
    start: &EffectiveState,
    triples: &TripleSet,
    t_end: f64,
    dir: &Path,
    stem: &str,
) -> Result<EffectiveSummary> {
    let dt = match cfg.eff_step {
        EffStep::Fixed(dt) => dt,
        EffStep::Auto { phase_step } => {
            let rate = EffectiveModel::new(&start.keys(), triples).slow_rate(start)?;
            if rate > 0.0 {
                (phase_step / rate).min(t_end.max(f64::MIN_POSITIVE))
            } else {
                t_end.max(1.0)
            }
        }
    };
    let traj = integrate_effective(start, triples, dt, t_end, cfg.eff_scheme, cfg.eff_stride)?;
    let csv = format!("{stem}.csv");
    let triple_csv = format!("{stem}_triples.csv");
    traj.write_csv(BufWriter::new(File::create(dir.join(&csv))?))?;
    traj.write_triple_csv(BufWriter::new(File::create(dir.join(&triple_csv))?))?;
    let m0 = start.momentum();
    let momentum_drift = traj
        .states
        .iter()
        .map(|s| if m0 > 0.0 { (s.momentum() - m0).abs() / m0 } else { 0.0 })
        .fold(0.0, f64::max);
    Ok(EffectiveSummary { csv, triple_csv, dt, growth: growth_report(&traj)?, momentum_drift })
}

fn run_one(
    cfg: &ExperimentConfig,
    lattice: &std::sync::Arc<Lattice>,
    nf: &NormalForm,
    triples: &TripleSet,
    index: usize,
    eps: f64,
    dir: &Path,
) -> Result<RunSummary> {
    let phases = if cfg.seeded_phases { PhasePolicy::Seeded(cfg.seed) } else { PhasePolicy::Zero };
    let data = make_nonresonant_with(&cfg.kind, lattice, eps, phases)?;
    let c0 = match &cfg.c0 {
        Some(req) => {
            let req = req.to_f64().unwrap_or(f64::NAN);
            let rep = check_nonres(&crate::spectral::u_lambda_map(&data.state), triples, req, Form::U)?;
            if !rep.pass {
                return Err(Error::Certification(format!(
                    "eps={eps}: data misses requested c0 = {req} (worst margin {:?})",
                    rep.worst_margin
                )));
            }
            req
        }
        None => data.certificate.c0,
    };
    let t_end = cfg.horizon(eps, c0);
    let mut summary = RunSummary {
        eps,
        t_end,
        seed: cfg.seed,
        config_hash: cfg.hash(),
        certificate: data.certificate.clone(),
        physical: None,
        effective: None,
        control: None,
    };
    if matches!(cfg.dynamics, Dynamics::Physical | Dynamics::Both) {
        let traj = integrate_physical(&data.state, cfg.phys_dt, t_end, cfg.phys_scheme, cfg.phys_stride)?;
        let csv = format!("physical_{index}.csv");
        traj.write_csv(BufWriter::new(File::create(dir.join(&csv))?))?;
        let u0 = u_lambda(&data.state);
        let max_u_change = traj
            .diagnostics
            .iter()
            .flat_map(|d| d.u.iter().zip(&u0).filter(|(_, b)| **b > 0.0).map(|(a, b)| (a / b - 1.0).abs()))
            .fold(0.0, f64::max);
        let energy_drift = traj.max_energy_drift();
        summary.physical = Some(PhysicalSummary { csv, dt: cfg.phys_dt, energy_drift, max_u_change });
    }
    if matches!(cfg.dynamics, Dynamics::Effective | Dynamics::Both) {
        let u = nf.to_normal(&data.state)?;
        let start = EffectiveState::from_pair(&u, cfg.closure);
        summary.effective = Some(run_effective(cfg, &start, triples, t_end, dir, &format!("effective_{index}"))?);
        if cfg.control == Control::Resonant {
            let ctl = resonant_control(&start, triples, nf.m1(), u.u.norm(nf.m1()))?;
            summary.control = Some(run_effective(cfg, &ctl, triples, t_end, dir, &format!("control_{index}"))?);
        }
    }
    let json = File::create(dir.join(format!("run_{index}.json")))?;
    serde_json::to_writer_pretty(BufWriter::new(json), &summary)?;
    Ok(summary)
}

/// Run every ε of the grid (in parallel) and write the manifest.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest> {
    let start = Instant::now();
    std::fs::create_dir_all(out)?;
    let lattice = build_lattice(cfg.d, cfg.n_max)?;
    let nf = NormalForm::new(&lattice);
    let triples = resonant_triples(&lattice);
    std::fs::write(out.join("config.txt"), cfg.canonical())?;
    let runs = cfg
        .eps
        .par_iter()
        .enumerate()
        .map(|(i, &eps)| run_one(cfg, &lattice, &nf, &triples, i, eps, out))
        .collect::<Result<Vec<_>>>()?;
    let fit_of = |pick: &dyn Fn(&RunSummary) -> Option<f64>| -> Option<ScalingFit> {
        let series: Vec<(f64, f64)> = runs.iter().filter_map(|r| pick(r).map(|g| (r.eps, g))).collect();
        (series.len() >= 2).then(|| fit_scaling(&series).ok()).flatten()
    };
    let growth_fit = fit_of(&|r| r.effective.as_ref().map(|e| e.growth.max_growth));
    let control_growth_fit = fit_of(&|r| r.control.as_ref().map(|e| e.growth.max_growth));
    let manifest = Manifest {
        name: cfg.name.clone(),
        config_hash: cfg.hash(),
        config: cfg.raw.clone(),
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: start.elapsed().as_secs_f64(),
        runs,
        growth_fit,
        control_growth_fit,
    };
    serde_json::to_writer_pretty(BufWriter::new(File::create(out.join("manifest.json"))?), &manifest)?;
    Ok(manifest)
}

/// Default output directory for a config: `runs/<name>-<hash prefix>`.
pub fn default_out_dir(cfg: &ExperimentConfig) -> PathBuf {
    PathBuf::from("runs").join(format!("{}-{}", cfg.name, &cfg.hash()[..12]))
}
