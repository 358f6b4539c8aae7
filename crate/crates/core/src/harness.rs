//! Experiment driver: presets, benchmark schemes, outage validation and CSV
//! output.
//!
//! A run is a `(RunSpec, seed)` pair. Runs are independent and execute on a
//! rayon pool; rows come back in task order, so the output does not depend on
//! the number of workers.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use ordered_float::OrderedFloat;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, Median, Statistics};

use crate::aioa::{default_init, evaluate, init_with_rics, run_aioa, AioaOptions, SolveReport};
use crate::channel::{draw_channels, ChannelSet};
use crate::error::{Error, Result};
use crate::link::{expected_sinr_v2v_all, outage_monte_carlo, surrogate_threshold, OutageOptions, SharingMatrix};
use crate::offload::{Decision, OffloadVector};
use crate::rics::RicsState;
use crate::rng::{stream, Domain};
use crate::scenario::{generate_scenario, Config, PlacementConfig, Scenario, SharingPolicy, SystemParams};
use crate::solver_sdr::{nulling_state, random_state};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    Fig3a,
    Fig3b,
    Fig3c,
    Custom,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig3a => "fig3a",
            Preset::Fig3b => "fig3b",
            Preset::Fig3c => "fig3c",
            Preset::Custom => "custom",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig3a" => Ok(Preset::Fig3a),
            "fig3b" => Ok(Preset::Fig3b),
            "fig3c" => Ok(Preset::Fig3c),
            "custom" => Ok(Preset::Custom),
            _ => Err(Error::Unknown { kind: "preset", name: s.to_string() }),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// The alternating optimizer.
    Aioa,
    /// Everything offloaded, `ρ = 1`.
    Total,
    /// Everything computed on board, `ρ = 0`.
    Local,
    /// `ρ_m ∈ {0, 1}` drawn per CV.
    Random,
    /// Optimized ratios and sharing on channels without the surface.
    NoRics,
    /// Optimized ratios and sharing under uniformly random RICS phases.
    RandomPhase,
    /// Optimized ratios and sharing under nulling phases and `Ψ = 1`.
    NullingPassive,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::Aioa,
        Scheme::Total,
        Scheme::Local,
        Scheme::Random,
        Scheme::NoRics,
        Scheme::RandomPhase,
        Scheme::NullingPassive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Aioa => "aioa",
            Scheme::Total => "total",
            Scheme::Local => "local",
            Scheme::Random => "random",
            Scheme::NoRics => "no-rics",
            Scheme::RandomPhase => "random-phase",
            Scheme::NullingPassive => "nulling-passive",
        }
    }

    fn fixed_ratio(self) -> bool {
        matches!(self, Scheme::Total | Scheme::Local | Scheme::Random)
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Unknown { kind: "scheme", name: s.to_string() })
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Decision of an offloading benchmark. Without `fair` the side variables are
/// `α = 0` and an identity-split RICS; with it they are copied from `fair`.
pub fn benchmark_scheme(name: &str, scenario: &Scenario, ch: &ChannelSet, fair: Option<&Decision>) -> Result<Decision> {
    let scheme: Scheme = name.parse()?;
    let m = ch.m();
    let rho = match scheme {
        Scheme::Total => vec![1.0; m],
        Scheme::Local => vec![0.0; m],
        Scheme::Random => (0..m)
            .map(|i| {
                let mut rng = stream(scenario.seed, Domain::Scheme, 0, i as u64);
                if rng.random_bool(0.5) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect(),
        _ => return Err(Error::Unknown { kind: "offloading benchmark", name: name.to_string() }),
    };
    let (alpha, rics) = match fair {
        Some(d) => (d.alpha.clone(), d.rics.clone()),
        None => (SharingMatrix::zeros(m, ch.n()), RicsState::identity_split(ch.l(), scenario.params.psi)),
    };
    Ok(Decision { rho: OffloadVector { rho }, alpha, rics })
}

/// Channels and fixed RICS state of a surface benchmark.
pub fn benchmark_rics(scheme: Scheme, scenario: &Scenario, ch: &ChannelSet) -> Result<(ChannelSet, RicsState)> {
    let p = &scenario.params;
    let l = ch.l();
    let zeros = SharingMatrix::zeros(ch.m(), ch.n());
    match scheme {
        Scheme::NoRics => Ok((ch.without_rics(), RicsState::identity_split(l, p.psi))),
        Scheme::RandomPhase => {
            let mut rng = stream(scenario.seed, Domain::Scheme, 1, 0);
            Ok((ch.clone(), random_state(&mut rng, l, p.psi)))
        }
        Scheme::NullingPassive => Ok((ch.clone(), nulling_state(ch, &zeros, p, vec![0.5; l], vec![1.0; l])?)),
        other => Err(Error::Unknown { kind: "surface benchmark", name: other.name().to_string() }),
    }
}

/// One pair's line of the outage validation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageRow {
    pub pair: usize,
    pub empirical: f64,
    /// 95% Wilson score interval.
    pub ci_low: f64,
    pub ci_high: f64,
    /// `γ̃_n − γ̃_c`.
    pub surrogate_margin: f64,
    /// Empirical outage at most `P_out`.
    pub pass: bool,
}

fn wilson(q: f64, trials: usize) -> (f64, f64) {
    let (z, t) = (1.959_963_984_540_054, trials as f64);
    let z2 = z * z / t;
    let centre = (q + z2 / 2.0) / (1.0 + z2);
    let half = z * (q * (1.0 - q) / t + z2 / (4.0 * t)).sqrt() / (1.0 + z2);
    // the interval always brackets q; the clamps only absorb rounding
    ((centre - half).clamp(0.0, q), (centre + half).clamp(q, 1.0))
}

/// Per-pair Monte-Carlo outage of a solution next to its surrogate margin.
/// The pass column is informational: the surrogate is an approximation.
pub fn validate_outage(report: &SolveReport, scenario: &Scenario, ch: &ChannelSet, trials: usize) -> Result<Vec<OutageRow>> {
    let p = &scenario.params;
    let d = &report.decision;
    let est = outage_monte_carlo(ch, &d.rics, &d.alpha, p, trials, scenario.seed, OutageOptions::default())?;
    let gc = surrogate_threshold(p)?;
    let margins = expected_sinr_v2v_all(ch, &d.rics, &d.alpha, p);
    Ok(est
        .estimate
        .iter()
        .zip(&margins)
        .enumerate()
        .map(|(pair, (&q, &g))| {
            let (ci_low, ci_high) = wilson(q, trials);
            OutageRow { pair, empirical: q, ci_low, ci_high, surrogate_margin: g - gc, pass: q <= p.p_out }
        })
        .collect())
}

/// Parameters and scheme of one experiment point; every seed runs it once.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub scheme: Scheme,
    pub params: SystemParams,
}

fn with<F: FnOnce(&mut SystemParams)>(base: &SystemParams, f: F) -> SystemParams {
    let mut p = base.clone();
    f(&mut p);
    p.refresh_derived();
    p
}

/// Experiment points of a preset, built on the configured parameters.
/// `schemes` applies to the custom preset only and defaults to AIOA.
pub fn plan(preset: Preset, config: &Config, schemes: &[Scheme]) -> Result<Vec<RunSpec>> {
    let base = &config.system;
    let mut out = Vec::new();
    match preset {
        Preset::Fig3a => {
            for l in [30, 64] {
                out.push(RunSpec { scheme: Scheme::Aioa, params: with(base, |p| p.l = l) });
            }
        }
        Preset::Fig3b => {
            let b = with(base, |p| {
                p.n = 5;
                p.sharing = SharingPolicy::Required;
            });
            for dbm in 20..=26 {
                for psi in [1.2, 1.5] {
                    out.push(RunSpec { scheme: Scheme::Aioa, params: with(&b, |p| (p.p_t_dbm, p.psi) = (dbm as f64, psi)) });
                }
                for scheme in [Scheme::NoRics, Scheme::RandomPhase, Scheme::NullingPassive] {
                    let params = with(&b, |p| {
                        p.p_t_dbm = dbm as f64;
                        if scheme == Scheme::NullingPassive {
                            p.psi = 1.0;
                        }
                    });
                    out.push(RunSpec { scheme, params });
                }
            }
            for k in 10..=20 {
                let params = with(&b, |p| p.psi = k as f64 / 10.0);
                if !out.iter().any(|r| r.scheme == Scheme::Aioa && r.params == params) {
                    out.push(RunSpec { scheme: Scheme::Aioa, params });
                }
            }
        }
        Preset::Fig3c => {
            for m in 2..=16 {
                for scheme in [Scheme::Aioa, Scheme::Total, Scheme::Local, Scheme::Random] {
                    out.push(RunSpec { scheme, params: with(base, |p| p.m = m) });
                }
            }
        }
        Preset::Custom => {
            let schemes = if schemes.is_empty() { &[Scheme::Aioa][..] } else { schemes };
            let points = match &config.sweep {
                Some(sw) => sw.values.iter().map(|&v| sw.apply(base, v)).collect::<Result<Vec<_>>>()?,
                None => vec![base.clone()],
            };
            for params in points {
                for &scheme in schemes {
                    out.push(RunSpec { scheme, params: params.clone() });
                }
            }
        }
    }
    for r in &out {
        r.params.validate()?;
    }
    Ok(out)
}

/// One CSV line: a run's state after `iteration` outer iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub preset: String,
    pub seed: u64,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "P_t_dbm")]
    pub p_t_dbm: f64,
    pub psi: f64,
    pub scheme: String,
    pub iteration: usize,
    pub objective: f64,
    pub sum_v2v_rate: f64,
    pub max_residual: f64,
    /// Filled on the last row of a run.
    pub empirical_outage_max: Option<f64>,
    pub wall_time_s: f64,
}

/// A run that stopped with an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub preset: String,
    pub seed: u64,
    pub scheme: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentOptions {
    pub seeds: Vec<u64>,
    /// Monte-Carlo trials for the outage column.
    pub outage_trials: usize,
    pub fair_rics: bool,
}

impl ExperimentOptions {
    pub fn from_config(config: &Config) -> Self {
        Self { seeds: config.seeds.seeds(), outage_trials: 2000, fair_rics: false }
    }
}

/// Rows of one run and, for optimizer-driven schemes, the solve report.
pub struct RunOutput {
    pub rows: Vec<Row>,
    pub report: Option<SolveReport>,
}

pub fn run_one(preset: Preset, spec: &RunSpec, placement: &PlacementConfig, seed: u64, opts: &ExperimentOptions) -> Result<RunOutput> {
    let start = Instant::now();
    let sc = generate_scenario(&spec.params, placement, seed);
    let ch = draw_channels(&sc, seed)?;
    let mut aioa = AioaOptions::for_scenario(&sc);
    aioa.outage_trials = opts.outage_trials;
    let row = |iteration: usize, rec: &crate::aioa::IterationRecord, outage: Option<f64>| Row {
        preset: preset.name().to_string(),
        seed,
        l: spec.params.l,
        m: spec.params.m,
        n: spec.params.n,
        p_t_dbm: spec.params.p_t_dbm,
        psi: spec.params.psi,
        scheme: spec.scheme.name().to_string(),
        iteration,
        objective: rec.objective,
        sum_v2v_rate: rec.sum_v2v_rate,
        max_residual: rec.max_residual,
        empirical_outage_max: outage,
        wall_time_s: rec.wall_time_s,
    };
    let from_report = |rep: SolveReport| {
        let last = rep.records.len() - 1;
        let worst = rep.empirical_outage.iter().copied().reduce(f64::max);
        let rows = rep.records.iter().enumerate().map(|(i, r)| row(i, r, if i == last { worst } else { None })).collect();
        RunOutput { rows, report: Some(rep) }
    };

    if spec.scheme.fixed_ratio() {
        let fair = if opts.fair_rics {
            Some(run_aioa(&sc, &ch, &default_init(&sc, &ch)?, &aioa)?.decision)
        } else {
            None
        };
        let d = benchmark_scheme(spec.scheme.name(), &sc, &ch, fair.as_ref())?;
        let rec = evaluate(&sc, &ch, &d, start)?;
        let outage = if opts.outage_trials > 0 {
            let est = outage_monte_carlo(&ch, &d.rics, &d.alpha, &sc.params, opts.outage_trials, seed, OutageOptions::default())?;
            est.estimate.into_iter().reduce(f64::max)
        } else {
            None
        };
        return Ok(RunOutput { rows: vec![row(0, &rec, outage)], report: None });
    }
    if spec.scheme == Scheme::Aioa {
        return Ok(from_report(run_aioa(&sc, &ch, &default_init(&sc, &ch)?, &aioa)?));
    }
    let (ch, rics) = benchmark_rics(spec.scheme, &sc, &ch)?;
    aioa.fixed_rics = true;
    Ok(from_report(run_aioa(&sc, &ch, &init_with_rics(&sc, &ch, rics)?, &aioa)?))
}

/// Worker pool capped by `RICS_THREADS` when set.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("RICS_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| Error::Parse(format!("RICS_THREADS must be a positive integer, got '{v}'")))?;
        if n == 0 {
            return Err(Error::Parse("RICS_THREADS must be at least 1".into()));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Io(std::io::Error::other(e)))
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentResult {
    pub rows: Vec<Row>,
    pub failures: Vec<Failure>,
}

/// Runs every point of `specs` for every seed. Output is sorted by seed, then
/// by point.
pub fn run_specs(preset: Preset, specs: &[RunSpec], placement: &PlacementConfig, opts: &ExperimentOptions) -> Result<ExperimentResult> {
    let mut seeds = opts.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let tasks: Vec<(u64, &RunSpec)> = seeds.iter().flat_map(|&s| specs.iter().map(move |r| (s, r))).collect();
    let outputs: Vec<_> = worker_pool()?.install(|| {
        tasks
            .par_iter()
            .map(|&(seed, spec)| {
                let out = run_one(preset, spec, placement, seed, opts);
                log::info!("{preset} seed {seed} {} L={} M={} N={}: {}", spec.scheme, spec.params.l, spec.params.m, spec.params.n, if out.is_ok() { "ok" } else { "failed" });
                (seed, spec.scheme, out)
            })
            .collect()
    });
    let mut result = ExperimentResult::default();
    for (seed, scheme, out) in outputs {
        match out {
            Ok(o) => result.rows.extend(o.rows),
            Err(e) => result.failures.push(Failure {
                preset: preset.name().to_string(),
                seed,
                scheme: scheme.name().to_string(),
                error: e.to_string(),
            }),
        }
    }
    Ok(result)
}

pub fn run_experiment(preset: Preset, config: &Config, schemes: &[Scheme], opts: &ExperimentOptions) -> Result<ExperimentResult> {
    let specs = plan(preset, config, schemes)?;
    run_specs(preset, &specs, &config.placement, opts)
}

/// Mean, median and standard error of one metric over the seeds of a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub preset: String,
    pub scheme: String,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "P_t_dbm")]
    pub p_t_dbm: f64,
    pub psi: f64,
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub std_error: f64,
}

type PointKey = (String, String, usize, usize, usize, OrderedFloat<f64>, OrderedFloat<f64>);

fn point_key(r: &Row) -> PointKey {
    (r.preset.clone(), r.scheme.clone(), r.l, r.m, r.n, OrderedFloat(r.p_t_dbm), OrderedFloat(r.psi))
}

/// Final row of every run, keyed by point and seed.
pub fn final_rows(rows: &[Row]) -> BTreeMap<(PointKey, u64), &Row> {
    let mut last: BTreeMap<(PointKey, u64), &Row> = BTreeMap::new();
    for r in rows {
        let e = last.entry((point_key(r), r.seed)).or_insert(r);
        if r.iteration >= e.iteration {
            *e = r;
        }
    }
    last
}

/// Summary statistics of the final objective and V2V rate per point.
pub fn aggregate(rows: &[Row]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<PointKey, Vec<&Row>> = BTreeMap::new();
    for ((key, _), r) in final_rows(rows) {
        groups.entry(key).or_default().push(r);
    }
    let mut out = Vec::new();
    for (key, runs) in groups {
        let (preset, scheme, l, m, n, p_t, psi) = key;
        for (metric, get) in [("objective", (|r: &Row| r.objective) as fn(&Row) -> f64), ("sum_v2v_rate", |r: &Row| r.sum_v2v_rate)] {
            let values: Vec<f64> = runs.iter().map(|r| get(r)).collect();
            let count = values.len();
            let std_error = if count > 1 { values.iter().std_dev() / (count as f64).sqrt() } else { 0.0 };
            out.push(SummaryRow {
                preset: preset.clone(),
                scheme: scheme.clone(),
                l,
                m,
                n,
                p_t_dbm: p_t.0,
                psi: psi.0,
                metric: metric.to_string(),
                count,
                mean: values.iter().mean(),
                median: Data::new(values).median(),
                std_error,
            });
        }
    }
    out
}

fn write_csv<T: Serialize>(path: &Path, items: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(!items.is_empty()).from_path(path)?;
    if items.is_empty() {
        w.write_record(header)?;
    }
    for it in items {
        w.serialize(it)?;
    }
    w.flush()?;
    Ok(())
}

pub const ROW_COLUMNS: [&str; 14] = [
    "preset",
    "seed",
    "L",
    "M",
    "N",
    "P_t_dbm",
    "psi",
    "scheme",
    "iteration",
    "objective",
    "sum_v2v_rate",
    "max_residual",
    "empirical_outage_max",
    "wall_time_s",
];

/// Writes `runs.csv`, `summary.csv` and `failures.csv` into `dir`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(&dir.join("runs.csv"), &result.rows, &ROW_COLUMNS)?;
    write_csv(
        &dir.join("summary.csv"),
        &aggregate(&result.rows),
        &["preset", "scheme", "L", "M", "N", "P_t_dbm", "psi", "metric", "count", "mean", "median", "std_error"],
    )?;
    write_csv(&dir.join("failures.csv"), &result.failures, &["preset", "seed", "scheme", "error"])?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<Row>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<Row>, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::offload::{objective, safety_coefficient};

    fn small(m: usize) -> (Scenario, ChannelSet) {
        let mut p = SystemParams::default();
        (p.l, p.m, p.n) = (4, m, 2);
        let sc = generate_scenario(&p, &PlacementConfig::default(), 5);
        let ch = draw_channels(&sc, 5).unwrap();
        (sc, ch)
    }

    #[test]
    fn names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        for p in [Preset::Fig3a, Preset::Fig3b, Preset::Fig3c, Preset::Custom] {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!(matches!("greedy".parse::<Scheme>(), Err(Error::Unknown { .. })));
        assert!(matches!("fig9".parse::<Preset>(), Err(Error::Unknown { .. })));
    }

    #[test]
    fn local_scheme_gives_on_board_safety() {
        let (sc, ch) = small(3);
        let d = benchmark_scheme("local", &sc, &ch, None).unwrap();
        let p = &sc.params;
        let total = objective(&sc, &ch, &d).unwrap();
        let expect: f64 = sc.tasks.iter().map(|t| p.lambda_acc * p.a_b * t.f / t.c).sum();
        assert!((total - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn total_scheme_delay_is_upload_plus_server() {
        let (sc, ch) = small(3);
        let d = benchmark_scheme("total", &sc, &ch, None).unwrap();
        assert!(d.rho.rho.iter().all(|&r| r == 1.0));
        assert!(d.alpha.data.iter().all(|&a| a == 0.0));
        let p = &sc.params;
        let rates = crate::offload::uplink_rates(&ch, &d.rics, &d.alpha, p);
        for (m, t) in sc.tasks.iter().enumerate() {
            let s = safety_coefficient(t, 1.0, rates[m], p, m).unwrap();
            let tau = t.s / rates[m] + t.c / p.f_server_hz;
            assert!((s - p.a_b / tau).abs() <= 1e-12 * s);
        }
    }

    #[test]
    fn random_scheme_is_reproducible() {
        let (sc, ch) = small(12);
        let a = benchmark_scheme("random", &sc, &ch, None).unwrap();
        let b = benchmark_scheme("random", &sc, &ch, None).unwrap();
        assert_eq!(a, b);
        assert!(a.rho.rho.iter().all(|&r| r == 0.0 || r == 1.0));
        assert!(a.rho.rho.contains(&0.0) && a.rho.rho.contains(&1.0));
        assert!(matches!(benchmark_scheme("aioa", &sc, &ch, None), Err(Error::Unknown { .. })));
    }

    #[test]
    fn fair_benchmarks_copy_side_variables() {
        let (sc, ch) = small(3);
        let mut side = benchmark_scheme("total", &sc, &ch, None).unwrap();
        side.rics.theta_r[0] = 1.0;
        side.alpha.set(0, 1, 0.25);
        let d = benchmark_scheme("local", &sc, &ch, Some(&side)).unwrap();
        assert_eq!(d.alpha, side.alpha);
        assert_eq!(d.rics, side.rics);
    }

    #[test]
    fn no_rics_channels_lose_both_cascades() {
        let (_, ch) = small(2);
        let bare = ch.without_rics();
        assert!(bare.reflect_cascade(0).iter().all(|z| z.norm() == 0.0));
        assert!(bare.refract_cascade(1, 1).iter().all(|z| z.norm() == 0.0));
        assert_eq!(bare.h_mb, ch.h_mb);
    }

    #[test]
    fn zero_sharing_outage_is_noise_limited() {
        let (sc, ch) = small(2);
        let d = benchmark_scheme("total", &sc, &ch, None).unwrap();
        let rep = SolveReport {
            objective_trace: vec![0.0],
            records: Vec::new(),
            block_timings: Vec::new(),
            converged: true,
            iterations: 0,
            decision: d.clone(),
            constraint_residuals: BTreeMap::new(),
            empirical_outage: Vec::new(),
            normalized_safety: Vec::new(),
            warnings: Vec::new(),
        };
        let table = validate_outage(&rep, &sc, &ch, 4000).unwrap();
        let est = outage_monte_carlo(&ch, &d.rics, &d.alpha, &sc.params, 4000, sc.seed, OutageOptions::default()).unwrap();
        assert_eq!(table.len(), 2);
        for row in &table {
            assert_eq!(row.empirical, est.estimate[row.pair]);
            assert!(row.ci_low <= row.empirical && row.empirical <= row.ci_high);
            assert_eq!(row.pass, row.empirical <= sc.params.p_out);
        }
    }

    #[test]
    fn wilson_interval_brackets_estimate() {
        for (q, t) in [(0.0, 100), (0.01, 1000), (0.5, 200), (1.0, 150)] {
            let (lo, hi) = wilson(q, t);
            assert!(lo <= q && q <= hi && lo >= 0.0 && hi <= 1.0, "{q} {lo} {hi}");
        }
        let (lo, hi) = wilson(0.0, 1000);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.01);
    }

    #[test]
    fn presets_cover_their_axes() {
        let cfg = Config::default();
        let a = plan(Preset::Fig3a, &cfg, &[]).unwrap();
        assert_eq!(a.iter().map(|r| r.params.l).collect::<Vec<_>>(), vec![30, 64]);
        let b = plan(Preset::Fig3b, &cfg, &[]).unwrap();
        assert!(b.iter().all(|r| r.params.n == 5 && r.params.sharing == SharingPolicy::Required));
        assert_eq!(b.iter().filter(|r| r.scheme == Scheme::Aioa && r.params.p_t_dbm == 23.0).count(), 11);
        assert_eq!(b.iter().filter(|r| r.scheme == Scheme::NullingPassive).count(), 7);
        assert!(b.iter().filter(|r| r.scheme == Scheme::NullingPassive).all(|r| r.params.psi == 1.0));
        let c = plan(Preset::Fig3c, &cfg, &[]).unwrap();
        assert_eq!(c.len(), 15 * 4);
        let custom = plan(Preset::Custom, &cfg, &[Scheme::Local, Scheme::Total]).unwrap();
        assert_eq!(custom.len(), 2);
    }

    fn row(seed: u64, scheme: &str, iteration: usize, objective: f64) -> Row {
        Row {
            preset: "custom".into(),
            seed,
            l: 4,
            m: 2,
            n: 2,
            p_t_dbm: 23.0,
            psi: 1.2,
            scheme: scheme.into(),
            iteration,
            objective,
            sum_v2v_rate: 2.0 * objective,
            max_residual: 0.0,
            empirical_outage_max: None,
            wall_time_s: 0.1,
        }
    }

    #[test]
    fn aggregate_uses_final_iterations() {
        let rows = vec![row(0, "aioa", 0, 1.0), row(0, "aioa", 1, 2.0), row(1, "aioa", 0, 4.0), row(2, "aioa", 0, 6.0), row(0, "local", 0, 1.0)];
        let s = aggregate(&rows);
        let obj = s.iter().find(|r| r.scheme == "aioa" && r.metric == "objective").unwrap();
        assert_eq!(obj.count, 3);
        assert!((obj.mean - 4.0).abs() < 1e-12);
        assert_eq!(obj.median, 4.0);
        assert!((obj.std_error - 2.0 / 3f64.sqrt()).abs() < 1e-12);
        let local = s.iter().find(|r| r.scheme == "local" && r.metric == "sum_v2v_rate").unwrap();
        assert_eq!((local.count, local.std_error), (1, 0.0));
    }

    #[test]
    fn csv_round_trip_reaggregates_identically() {
        let mut rows = vec![row(0, "aioa", 0, 0.1), row(0, "aioa", 1, 0.1 + 0.2), row(1, "aioa", 0, 1.0 / 3.0)];
        rows[1].empirical_outage_max = Some(0.007);
        let dir = tempfile::tempdir().unwrap();
        let res = ExperimentResult { rows: rows.clone(), failures: Vec::new() };
        write_outputs(&res, dir.path()).unwrap();
        let back = read_rows(&dir.path().join("runs.csv")).unwrap();
        assert_eq!(back, rows);
        assert_eq!(aggregate(&back), aggregate(&rows));
    }

    #[test]
    fn bad_thread_cap_is_rejected() {
        // The variable is read only here, so setting it cannot race other tests.
        std::env::set_var("RICS_THREADS", "zero");
        let r = worker_pool();
        std::env::remove_var("RICS_THREADS");
        assert!(matches!(r, Err(Error::Parse(_))));
    }
}
