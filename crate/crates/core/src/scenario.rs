//! Configuration, geometry and task generation.
//!
//! `SystemParams` is the single owner of every constant of the model. It is
//! built either from [`SystemParams::default`] (the reference simulation
//! setup) or from a JSON config via [`load_config`], which fills unspecified
//! keys with the defaults and validates the result.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Domain};

/// Converts dBm to watts.
pub fn dbm_to_w(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Converts watts to dBm.
pub fn w_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Rician K-factors (linear) per link class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KappaDefaults {
    /// CV -> BS direct link.
    pub cv_bs: f64,
    /// V2V Tx -> Rx desired link.
    pub v2v: f64,
    /// CV -> V2V Rx interference link.
    pub cv_rx: f64,
    /// V2V Tx -> BS interference link.
    pub tx_bs: f64,
    /// CV -> RICS.
    pub cv_rics: f64,
    /// RICS -> BS.
    pub rics_bs: f64,
    /// RICS -> V2V Rx.
    pub rics_rx: f64,
}

impl Default for KappaDefaults {
    fn default() -> Self {
        Self {
            cv_bs: 0.0,
            v2v: 0.0,
            cv_rx: 0.0,
            tx_bs: 0.0,
            cv_rics: 10.0,
            rics_bs: 10.0,
            rics_rx: 10.0,
        }
    }
}

/// How the relaxed sharing matrix is constrained beyond `0 <= alpha <= 1` and
/// `sum_n alpha[m][n] <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SharingPolicy {
    /// V2V pairs may or may not reuse a CV band.
    #[default]
    Optional,
    /// Every V2V pair reuses at most one CV band and exactly `min(M, N)`
    /// CV/pair couplings are active.
    Required,
}

/// All scalar constants of the model, stored in SI/linear units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub l: usize,
    pub m: usize,
    pub n: usize,
    pub bandwidth_hz: f64,
    pub noise_dbm: f64,
    /// Total noise power W * xi_0 in watts.
    pub noise_power: f64,
    pub p_m_dbm: f64,
    pub p_m: f64,
    pub p_t_dbm: f64,
    pub p_t: f64,
    pub f_server_hz: f64,
    pub gamma_th_db: f64,
    pub gamma_th: f64,
    pub p_out: f64,
    pub omega: f64,
    pub delta: f64,
    pub lambda_acc: f64,
    pub a_b: f64,
    /// Path-loss exponent of the direct (non-RICS) links.
    pub beta_pl: f64,
    /// Path-loss exponent of the RICS-side links.
    pub beta_rics: f64,
    /// Power gain at 1 m, dB.
    pub ref_gain_db: f64,
    pub kappa: KappaDefaults,
    pub psi: f64,
    pub cycles_per_bit: f64,
    pub task_bits: [f64; 2],
    pub local_cpu_hz: [f64; 2],
    pub deadline_s: [f64; 2],
    pub carrier_hz: f64,
    /// Element spacing in wavelengths.
    pub element_spacing: f64,
    pub sharing: SharingPolicy,
    pub max_outer: usize,
    pub randomization_trials: usize,
}

impl Default for SystemParams {
    fn default() -> Self {
        let mut p = Self {
            l: 30,
            m: 10,
            n: 10,
            bandwidth_hz: 10e6,
            noise_dbm: -110.0,
            noise_power: 0.0,
            p_m_dbm: 28.0,
            p_m: 0.0,
            p_t_dbm: 23.0,
            p_t: 0.0,
            f_server_hz: 10e9,
            gamma_th_db: 3.0,
            gamma_th: 0.0,
            p_out: 0.01,
            omega: 10.0,
            delta: 1e-3,
            lambda_acc: 0.6,
            a_b: 0.9,
            beta_pl: 4.0,
            beta_rics: 2.2,
            ref_gain_db: -30.0,
            kappa: KappaDefaults::default(),
            psi: 1.2,
            cycles_per_bit: 1000.0,
            task_bits: [10e6, 20e6],
            local_cpu_hz: [1e9, 5e9],
            deadline_s: [1.0, 3.0],
            carrier_hz: 5.9e9,
            element_spacing: 0.5,
            sharing: SharingPolicy::Optional,
            max_outer: 30,
            randomization_trials: 200,
        };
        p.refresh_derived();
        p
    }
}

impl SystemParams {
    /// Recomputes the linear-unit mirrors of the dB-valued fields.
    pub fn refresh_derived(&mut self) {
        self.noise_power = dbm_to_w(self.noise_dbm);
        self.p_m = dbm_to_w(self.p_m_dbm);
        self.p_t = dbm_to_w(self.p_t_dbm);
        self.gamma_th = db_to_lin(self.gamma_th_db);
    }

    pub fn set_p_t_dbm(&mut self, dbm: f64) {
        self.p_t_dbm = dbm;
        self.refresh_derived();
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(field: &'static str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Constraint { field, bound: "(0,inf)", value: v })
            }
        }
        for (field, v) in [("L", self.l), ("M", self.m), ("N", self.n)] {
            if v == 0 {
                return Err(Error::Constraint { field, bound: "[1,inf)", value: 0.0 });
            }
        }
        positive("W_hz", self.bandwidth_hz)?;
        positive("noise_power", self.noise_power)?;
        positive("P_m", self.p_m)?;
        positive("P_t", self.p_t)?;
        positive("F_hz", self.f_server_hz)?;
        positive("omega", self.omega)?;
        positive("delta", self.delta)?;
        positive("cycles_per_bit", self.cycles_per_bit)?;
        positive("carrier_hz", self.carrier_hz)?;
        positive("element_spacing", self.element_spacing)?;
        if !(self.p_out > 0.0 && self.p_out < 1.0) {
            return Err(Error::Constraint { field: "P_out", bound: "(0,1)", value: self.p_out });
        }
        if !(self.lambda_acc > 0.0 && self.lambda_acc <= 1.0) {
            return Err(Error::Constraint { field: "lambda", bound: "(0,1]", value: self.lambda_acc });
        }
        if !(self.a_b > 0.0 && self.a_b <= 1.0) {
            return Err(Error::Constraint { field: "A_B", bound: "(0,1]", value: self.a_b });
        }
        if !(self.beta_pl >= 2.0) {
            return Err(Error::Constraint { field: "beta", bound: "[2,inf)", value: self.beta_pl });
        }
        if !(self.beta_rics >= 2.0) {
            return Err(Error::Constraint { field: "beta_rics", bound: "[2,inf)", value: self.beta_rics });
        }
        if !(self.psi >= 1.0 && self.psi.is_finite()) {
            return Err(Error::Constraint { field: "psi", bound: "[1,inf)", value: self.psi });
        }
        let k = &self.kappa;
        for (field, v) in [
            ("kappa.cv_bs", k.cv_bs),
            ("kappa.v2v", k.v2v),
            ("kappa.cv_rx", k.cv_rx),
            ("kappa.tx_bs", k.tx_bs),
            ("kappa.cv_rics", k.cv_rics),
            ("kappa.rics_bs", k.rics_bs),
            ("kappa.rics_rx", k.rics_rx),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Constraint { field, bound: "[0,inf)", value: v });
            }
        }
        for (field, r) in [
            ("task_bits", self.task_bits),
            ("local_cpu_hz", self.local_cpu_hz),
            ("deadline_s", self.deadline_s),
        ] {
            if !(r[0] > 0.0 && r[1] >= r[0] && r[1].is_finite()) {
                return Err(Error::Constraint { field, bound: "0 < lo <= hi", value: r[0] });
            }
        }
        if self.max_outer == 0 {
            return Err(Error::Constraint { field: "max_outer", bound: "[1,inf)", value: 0.0 });
        }
        if self.randomization_trials == 0 {
            return Err(Error::Constraint { field: "randomization_trials", bound: "[1,inf)", value: 0.0 });
        }
        Ok(())
    }
}

pub type Point = [f64; 3];

pub fn distance(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Fixed infrastructure positions and the random-placement policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementConfig {
    pub bs: Point,
    pub rics: Point,
    pub field_radius: f64,
    /// Vehicle antenna heights are uniform on `[0, height_range]`.
    pub height_range: f64,
    /// V2V receivers lie uniformly within this distance of their transmitter.
    pub v2v_max_distance: f64,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            bs: [0.0, 0.0, 25.0],
            rics: [100.0, 0.0, 30.0],
            field_radius: 400.0,
            height_range: 2.0,
            v2v_max_distance: 25.0,
        }
    }
}

impl PlacementConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.field_radius > 0.0) {
            return Err(Error::Constraint { field: "field_radius", bound: "(0,inf)", value: self.field_radius });
        }
        if !(self.height_range >= 0.0 && self.height_range <= 50.0) {
            return Err(Error::Constraint { field: "height_range", bound: "[0,50]", value: self.height_range });
        }
        if !(self.v2v_max_distance > 0.0) {
            return Err(Error::Constraint {
                field: "v2v_max_distance",
                bound: "(0,inf)",
                value: self.v2v_max_distance,
            });
        }
        for (field, p) in [("placement.bs", self.bs), ("placement.rics", self.rics)] {
            if !(p[2] >= 0.0 && p[2] <= 50.0) {
                return Err(Error::Constraint { field, bound: "height [0,50]", value: p[2] });
            }
            if p[0].hypot(p[1]) > self.field_radius {
                return Err(Error::Constraint { field, bound: "field disk", value: p[0].hypot(p[1]) });
            }
        }
        Ok(())
    }
}

/// Concrete positions of every entity, in metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub bs_pos: Point,
    pub rics_pos: Point,
    pub cv_pos: Vec<Point>,
    pub v2v_tx_pos: Vec<Point>,
    pub v2v_rx_pos: Vec<Point>,
    pub field_radius: f64,
    pub height_range: f64,
}

/// A task `(s, c, sigma)` plus the local CPU rate of its CV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    /// Task size, bits.
    pub s: f64,
    /// Required CPU cycles.
    pub c: f64,
    /// Deadline, seconds. Reported only.
    pub sigma: f64,
    /// Local CPU rate, cycles/s.
    pub f: f64,
}

/// An immutable problem instance: parameters, geometry and tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub params: SystemParams,
    pub placement: Placement,
    pub tasks: Vec<TaskSpec>,
    pub seed: u64,
}

/// Sweep axis over which an experiment varies one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: String,
    pub values: Vec<f64>,
}

pub const SWEEP_AXES: &[&str] = &["L", "M", "N", "P_t_dbm", "P_m_dbm", "psi", "omega", "gamma_th_db"];

impl Sweep {
    pub fn validate(&self) -> Result<()> {
        if !SWEEP_AXES.contains(&self.axis.as_str()) {
            return Err(Error::InvalidSweep(format!("unknown axis '{}'", self.axis)));
        }
        if self.values.is_empty() {
            return Err(Error::InvalidSweep("no values".into()));
        }
        Ok(())
    }

    /// Applies one sweep value to a parameter set.
    pub fn apply(&self, params: &SystemParams, value: f64) -> Result<SystemParams> {
        let mut p = params.clone();
        let count = || -> Result<usize> {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::InvalidSweep(format!("{} must be a positive integer, got {value}", self.axis)))
            }
        };
        match self.axis.as_str() {
            "L" => p.l = count()?,
            "M" => p.m = count()?,
            "N" => p.n = count()?,
            "P_t_dbm" => p.p_t_dbm = value,
            "P_m_dbm" => p.p_m_dbm = value,
            "psi" => p.psi = value,
            "omega" => p.omega = value,
            "gamma_th_db" => p.gamma_th_db = value,
            other => return Err(Error::InvalidSweep(format!("unknown axis '{other}'"))),
        }
        p.refresh_derived();
        p.validate()?;
        Ok(p)
    }
}

/// Seed list, either explicit or as a contiguous range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Range { start: u64, count: usize },
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedSpec::List(v) => v.clone(),
            SeedSpec::Range { start, count } => (0..*count as u64).map(|i| start + i).collect(),
        }
    }
}

impl Default for SeedSpec {
    fn default() -> Self {
        SeedSpec::Range { start: 0, count: 20 }
    }
}

/// The `system` block as it appears on disk. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemFile {
    #[serde(rename = "L")]
    l: Option<usize>,
    #[serde(rename = "M")]
    m: Option<usize>,
    #[serde(rename = "N")]
    n: Option<usize>,
    #[serde(rename = "W_hz")]
    w_hz: Option<f64>,
    #[serde(rename = "W_xi0_dbm")]
    w_xi0_dbm: Option<f64>,
    #[serde(rename = "P_m_dbm")]
    p_m_dbm: Option<f64>,
    #[serde(rename = "P_t_dbm")]
    p_t_dbm: Option<f64>,
    #[serde(rename = "F_hz")]
    f_hz: Option<f64>,
    #[serde(rename = "P_out")]
    p_out: Option<f64>,
    delta: Option<f64>,
    beta: Option<f64>,
    beta_rics: Option<f64>,
    ref_gain_db: Option<f64>,
    gamma_th_db: Option<f64>,
    omega: Option<f64>,
    lambda: Option<f64>,
    #[serde(rename = "A_B")]
    a_b: Option<f64>,
    psi: Option<f64>,
    kappa: Option<KappaDefaults>,
    cycles_per_bit: Option<f64>,
    task_bits: Option<[f64; 2]>,
    local_cpu_hz: Option<[f64; 2]>,
    deadline_s: Option<[f64; 2]>,
    carrier_hz: Option<f64>,
    element_spacing: Option<f64>,
    sharing: Option<SharingPolicy>,
    max_outer: Option<usize>,
    randomization_trials: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    system: SystemFile,
    #[serde(default)]
    placement: PlacementConfig,
    sweep: Option<Sweep>,
    #[serde(default)]
    seeds: SeedSpec,
}

/// A validated experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    pub system: SystemParams,
    pub placement: PlacementConfig,
    pub sweep: Option<Sweep>,
    pub seeds: SeedSpec,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            system: SystemParams::default(),
            placement: PlacementConfig::default(),
            sweep: None,
            seeds: SeedSpec::default(),
        }
    }
}

/// Parses and validates a JSON config string.
pub fn parse_config(text: &str) -> Result<Config> {
    if text.trim().is_empty() {
        return Err(Error::Parse("empty config".into()));
    }
    let file: ConfigFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let s = file.system;
    let mut p = SystemParams::default();
    macro_rules! take {
        ($($src:ident => $dst:ident),* $(,)?) => {
            $(if let Some(v) = s.$src { p.$dst = v; })*
        };
    }
    take!(
        l => l, m => m, n => n, w_hz => bandwidth_hz, w_xi0_dbm => noise_dbm,
        p_m_dbm => p_m_dbm, p_t_dbm => p_t_dbm, f_hz => f_server_hz, p_out => p_out,
        delta => delta, beta => beta_pl, beta_rics => beta_rics, ref_gain_db => ref_gain_db,
        gamma_th_db => gamma_th_db, omega => omega, lambda => lambda_acc, a_b => a_b,
        psi => psi, kappa => kappa, cycles_per_bit => cycles_per_bit, task_bits => task_bits,
        local_cpu_hz => local_cpu_hz, deadline_s => deadline_s, carrier_hz => carrier_hz,
        element_spacing => element_spacing, sharing => sharing, max_outer => max_outer,
        randomization_trials => randomization_trials,
    );
    p.refresh_derived();
    p.validate()?;
    file.placement.validate()?;
    if let Some(sw) = &file.sweep {
        sw.validate()?;
    }
    Ok(Config { system: p, placement: file.placement, sweep: file.sweep, seeds: file.seeds })
}

/// Reads, parses and validates a JSON config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<Config> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

fn uniform_disk<R: Rng>(rng: &mut R, radius: f64) -> (f64, f64) {
    let r = radius * rng.random::<f64>().sqrt();
    let a = std::f64::consts::TAU * rng.random::<f64>();
    (r * a.cos(), r * a.sin())
}

fn uniform_in<R: Rng>(rng: &mut R, range: [f64; 2]) -> f64 {
    range[0] + (range[1] - range[0]) * rng.random::<f64>()
}

/// Draws placement and tasks. Deterministic in `(params, placement, seed)`;
/// entity `i` always comes from its own stream, so growing `M` or `N` keeps
/// the existing entities in place.
pub fn generate_scenario(params: &SystemParams, placement: &PlacementConfig, seed: u64) -> Scenario {
    let radius = placement.field_radius;
    let mut cv_pos = Vec::with_capacity(params.m);
    let mut tasks = Vec::with_capacity(params.m);
    for i in 0..params.m {
        let mut rng = stream(seed, Domain::CvPlacement, i as u64, 0);
        let (x, y) = uniform_disk(&mut rng, radius);
        cv_pos.push([x, y, placement.height_range * rng.random::<f64>()]);

        let mut rng = stream(seed, Domain::Task, i as u64, 0);
        let s = uniform_in(&mut rng, params.task_bits);
        let f = uniform_in(&mut rng, params.local_cpu_hz);
        let sigma = uniform_in(&mut rng, params.deadline_s);
        tasks.push(TaskSpec { s, c: params.cycles_per_bit * s, sigma, f });
    }
    let mut v2v_tx_pos = Vec::with_capacity(params.n);
    let mut v2v_rx_pos = Vec::with_capacity(params.n);
    for j in 0..params.n {
        let mut rng = stream(seed, Domain::V2vPlacement, j as u64, 0);
        let (x, y) = uniform_disk(&mut rng, radius);
        let z = placement.height_range * rng.random::<f64>();
        let (rx, ry) = loop {
            let (dx, dy) = uniform_disk(&mut rng, placement.v2v_max_distance);
            if (x + dx).hypot(y + dy) <= radius {
                break (x + dx, y + dy);
            }
        };
        v2v_tx_pos.push([x, y, z]);
        v2v_rx_pos.push([rx, ry, placement.height_range * rng.random::<f64>()]);
    }
    Scenario {
        params: params.clone(),
        placement: Placement {
            bs_pos: placement.bs,
            rics_pos: placement.rics,
            cv_pos,
            v2v_tx_pos,
            v2v_rx_pos,
            field_radius: radius,
            height_range: placement.height_range,
        },
        tasks,
        seed,
    }
}
