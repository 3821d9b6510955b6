//! Scenario files, load calibration and sweep expansion.
//!
//! A scenario file is TOML with a required `[ran]` and `[pon]` section and
//! an optional `[sweep]` section. Absent keys take the defaults below.
//!
//! ```toml
//! [ran]
//! numerology = 1          # 1 -> 0.5 ms slots, 2 -> 0.25 ms slots
//! cgs_fraction = 0.2      # share of PRBs reserved for URLLC
//! urllc_share = 0.2       # share of users that are URLLC
//! n_rus = 20
//!
//! [pon]
//! policy = "enhanced-codba"
//! load_pct = 80
//! dl_fraction = 1.0
//!
//! [sweep]
//! load_pct = [10, 50, 90]
//! seeds = [1, 2]
//! ```

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dba::DbaPolicy;
use crate::ran::{Numerology, PRBS_PER_USER};
use crate::rate::Split72Params;
use crate::sim::SimTime;
use crate::topology::{TopologyConfig, PON_CAPACITY_BPS};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("{key} = {value}: {reason}")]
    OutOfDomain {
        key: &'static str,
        value: String,
        reason: String,
    },
    #[error("unknown preset '{0}' (available: {list})", list = PRESET_NAMES.join(", "))]
    UnknownPreset(String),
}

fn out_of_domain(key: &'static str, value: impl fmt::Display, reason: &str) -> ScenarioError {
    ScenarioError::OutOfDomain {
        key,
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RanSection {
    #[serde(default = "default_numerology")]
    numerology: u8,
    slot_time_ms: Option<f64>,
    #[serde(default = "default_cgs")]
    cgs_fraction: f64,
    #[serde(default = "default_urllc_share")]
    urllc_share: f64,
    #[serde(default = "default_n_rus")]
    n_rus: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PonSection {
    #[serde(default = "default_policy")]
    policy: DbaPolicy,
    #[serde(default = "default_load")]
    load_pct: f64,
    #[serde(default = "default_dl_fraction")]
    dl_fraction: f64,
    #[serde(default = "default_headroom")]
    conventional_headroom: f64,
    #[serde(default = "default_ru_mec_km")]
    ru_mec_km: f64,
    #[serde(default = "default_mec_mec_km")]
    mec_mec_km: f64,
    #[serde(default = "default_mec_co_km")]
    mec_co_km: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    name: Option<String>,
    load_pct: Option<Vec<f64>>,
    dl_fraction: Option<Vec<f64>>,
    numerology: Option<Vec<u8>>,
    policy: Option<Vec<DbaPolicy>>,
    seeds: Option<Vec<u64>>,
    duration_s: Option<f64>,
    warmup_ms: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    ran: RanSection,
    pon: PonSection,
    sweep: Option<SweepSection>,
}

fn default_numerology() -> u8 {
    1
}
fn default_cgs() -> f64 {
    0.2
}
fn default_urllc_share() -> f64 {
    0.2
}
fn default_n_rus() -> u32 {
    DEFAULT_N_RUS
}
fn default_policy() -> DbaPolicy {
    DbaPolicy::EnhancedCoDba
}
fn default_load() -> f64 {
    50.0
}
fn default_dl_fraction() -> f64 {
    1.0
}
fn default_headroom() -> f64 {
    0.05
}
fn default_ru_mec_km() -> f64 {
    2.0
}
fn default_mec_mec_km() -> f64 {
    20.0
}
fn default_mec_co_km() -> f64 {
    50.0
}

pub const DEFAULT_N_RUS: u32 = 20;
pub const DEFAULT_DURATION: SimTime = SimTime::from_millis(2_000);
pub const DEFAULT_WARMUP: SimTime = SimTime::from_millis(50);

/// One fully specified simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub numerology: u8,
    pub cgs_fraction: f64,
    pub urllc_share: f64,
    pub n_rus: u32,
    pub policy: DbaPolicy,
    pub load_pct: f64,
    pub dl_fraction: f64,
    /// Fixed headroom of the conventional cooperative DBA, as a share of
    /// one RU's full-load fronthaul rate.
    pub conventional_headroom: f64,
    pub duration: SimTime,
    pub warmup: SimTime,
    pub seed: u64,
    pub topology: TopologyConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            id: "default".into(),
            numerology: 1,
            cgs_fraction: default_cgs(),
            urllc_share: default_urllc_share(),
            n_rus: DEFAULT_N_RUS,
            policy: default_policy(),
            load_pct: default_load(),
            dl_fraction: default_dl_fraction(),
            conventional_headroom: default_headroom(),
            duration: DEFAULT_DURATION,
            warmup: DEFAULT_WARMUP,
            seed: 1,
            topology: TopologyConfig {
                n_rus: DEFAULT_N_RUS,
                ..TopologyConfig::default()
            },
        }
    }
}

impl Scenario {
    pub fn numerology(&self) -> Numerology {
        Numerology::new(self.numerology).expect("validated numerology")
    }

    pub fn slot_ms(&self) -> f64 {
        self.numerology().slot_time_s() * 1e3
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if Numerology::new(self.numerology).is_err() {
            return Err(out_of_domain("numerology", self.numerology, "must be 1 or 2"));
        }
        if !(self.cgs_fraction > 0.0 && self.cgs_fraction < 1.0) {
            return Err(out_of_domain("cgs_fraction", self.cgs_fraction, "must be in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.urllc_share) {
            return Err(out_of_domain("urllc_share", self.urllc_share, "must be in [0, 1]"));
        }
        if self.n_rus == 0 || self.n_rus > 64 {
            return Err(out_of_domain("n_rus", self.n_rus, "must be in 1..=64"));
        }
        if !(self.load_pct > 0.0 && self.load_pct < 100.0) {
            return Err(out_of_domain("load_pct", self.load_pct, "must be in (0, 100)"));
        }
        if !(self.dl_fraction > 0.0 && self.dl_fraction <= 1.0) {
            return Err(out_of_domain("dl_fraction", self.dl_fraction, "must be in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.conventional_headroom) {
            return Err(out_of_domain(
                "conventional_headroom",
                self.conventional_headroom,
                "must be in [0, 1)",
            ));
        }
        for (key, km) in [
            ("ru_mec_km", self.topology.ru_mec_km),
            ("mec_mec_km", self.topology.mec_mec_km),
            ("mec_co_km", self.topology.mec_co_km),
        ] {
            if !(km > 0.0 && km.is_finite()) {
                return Err(out_of_domain(key, km, "must be a positive distance"));
            }
        }
        if self.duration <= self.warmup {
            return Err(out_of_domain(
                "duration_s",
                self.duration.as_secs_f64(),
                "must exceed the warm-up",
            ));
        }
        Ok(())
    }
}

/// Arrival rates that produce a scenario's target PON load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Mean users per slot per RU.
    pub users_per_slot: f64,
    /// Per-RU arrival rates in users per second.
    pub lambda_urllc: f64,
    pub lambda_normal: f64,
    /// Mean fronthaul rate of one RU at this load.
    pub ru_rate_bps: f64,
}

/// Inverts the fronthaul rate model: each RU must carry
/// `load · capacity / n_rus`, of which the control floor is fixed and the
/// rest is proportional to the users in a slot.
pub fn calibrate(s: &Scenario) -> Result<Calibration, ScenarioError> {
    let num = s.numerology();
    let p = Split72Params::for_numerology(&num);
    let ru_rate = s.load_pct / 100.0 * PON_CAPACITY_BPS / f64::from(s.n_rus);
    let floor = p.control_floor_rate();
    if ru_rate <= floor {
        return Err(out_of_domain(
            "load_pct",
            s.load_pct,
            &format!(
                "below the control-plane floor of {:.1} % for {} RUs",
                floor * f64::from(s.n_rus) / PON_CAPACITY_BPS * 100.0,
                s.n_rus
            ),
        ));
    }
    let per_user = p.per_prb_rate() * f64::from(PRBS_PER_USER);
    let m = (ru_rate - floor) / per_user;
    let max_users = f64::from(num.max_prbs() / PRBS_PER_USER);
    if m > max_users {
        return Err(out_of_domain(
            "load_pct",
            s.load_pct,
            &format!(
                "needs {m:.1} users per slot per RU but a slot holds {max_users}; add RUs"
            ),
        ));
    }
    let lambda = m / num.slot_time_s();
    Ok(Calibration {
        users_per_slot: m,
        lambda_urllc: lambda * s.urllc_share,
        lambda_normal: lambda * (1.0 - s.urllc_share),
        ru_rate_bps: ru_rate,
    })
}

/// A scenario template expanded over sweep axes and seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub name: String,
    pub template: Scenario,
    pub loads: Vec<f64>,
    pub dl_fractions: Vec<f64>,
    pub numerologies: Vec<u8>,
    pub policies: Vec<DbaPolicy>,
    pub seeds: Vec<u64>,
}

impl SweepSpec {
    pub fn single(template: Scenario) -> Self {
        SweepSpec {
            name: template.id.clone(),
            loads: vec![template.load_pct],
            dl_fractions: vec![template.dl_fraction],
            numerologies: vec![template.numerology],
            policies: vec![template.policy],
            seeds: vec![template.seed],
            template,
        }
    }

    /// Every (point, seed) combination in a fixed order.
    pub fn points(&self) -> Vec<Scenario> {
        let mut out = Vec::new();
        for &mu in &self.numerologies {
            for &policy in &self.policies {
                for &dl in &self.dl_fractions {
                    for &load in &self.loads {
                        for &seed in &self.seeds {
                            out.push(Scenario {
                                id: point_id(mu, policy, dl, load),
                                numerology: mu,
                                policy,
                                dl_fraction: dl,
                                load_pct: load,
                                seed,
                                ..self.template.clone()
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.loads.is_empty()
            || self.dl_fractions.is_empty()
            || self.numerologies.is_empty()
            || self.policies.is_empty()
        {
            return Err(out_of_domain("sweep", "[]", "every axis needs at least one point"));
        }
        if self.seeds.is_empty() {
            return Err(out_of_domain("seeds", "[]", "at least one seed is required"));
        }
        self.points().iter().try_for_each(Scenario::validate)
    }
}

pub fn point_id(mu: u8, policy: DbaPolicy, dl: f64, load: f64) -> String {
    format!("mu{mu}_{policy}_dl{:03}_load{:03}", (dl * 100.0).round(), load.round())
}

pub fn parse_sweep_str(text: &str, name: &str) -> Result<SweepSpec, ScenarioError> {
    let file: ScenarioFile =
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.message().to_string()))?;
    let ran = file.ran;
    let pon = file.pon;
    let sweep = file.sweep.unwrap_or_default();

    if let Some(ms) = ran.slot_time_ms {
        let num = Numerology::new(ran.numerology)
            .map_err(|_| out_of_domain("numerology", ran.numerology, "must be 1 or 2"))?;
        let expected = num.slot_time_s() * 1e3;
        if (ms - expected).abs() > 1e-9 {
            return Err(out_of_domain(
                "slot_time_ms",
                ms,
                &format!("numerology {} has {expected} ms slots", ran.numerology),
            ));
        }
    }

    let mut template = Scenario {
        id: sweep.name.clone().unwrap_or_else(|| name.to_string()),
        numerology: ran.numerology,
        cgs_fraction: ran.cgs_fraction,
        urllc_share: ran.urllc_share,
        n_rus: ran.n_rus,
        policy: pon.policy,
        load_pct: pon.load_pct,
        dl_fraction: pon.dl_fraction,
        conventional_headroom: pon.conventional_headroom,
        topology: TopologyConfig {
            n_rus: ran.n_rus,
            ru_mec_km: pon.ru_mec_km,
            mec_mec_km: pon.mec_mec_km,
            mec_co_km: pon.mec_co_km,
        },
        ..Scenario::default()
    };
    if let Some(d) = sweep.duration_s {
        if !(d > 0.0 && d.is_finite()) {
            return Err(out_of_domain("duration_s", d, "must be positive"));
        }
        template.duration = SimTime::from_secs_f64(d);
    }
    if let Some(w) = sweep.warmup_ms {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(out_of_domain("warmup_ms", w, "must be non-negative"));
        }
        template.warmup = SimTime::from_secs_f64(w / 1e3);
    }

    let spec = SweepSpec {
        name: template.id.clone(),
        loads: sweep.load_pct.unwrap_or_else(|| vec![template.load_pct]),
        dl_fractions: sweep.dl_fraction.unwrap_or_else(|| vec![template.dl_fraction]),
        numerologies: sweep.numerology.unwrap_or_else(|| vec![template.numerology]),
        policies: sweep.policy.unwrap_or_else(|| vec![template.policy]),
        seeds: sweep.seeds.unwrap_or_else(|| vec![template.seed]),
        template,
    };
    spec.template.validate()?;
    spec.validate()?;
    Ok(spec)
}

/// Parses a single-run scenario; any `[sweep]` axes are ignored and the
/// first seed is used.
pub fn parse_scenario_str(text: &str) -> Result<Scenario, ScenarioError> {
    let spec = parse_sweep_str(text, "scenario")?;
    let mut s = spec.template;
    s.seed = spec.seeds[0];
    Ok(s)
}

pub fn load_sweep(path: &Path) -> Result<SweepSpec, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());
    parse_sweep_str(&text, &name)
}

pub fn parse_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let spec = load_sweep(path)?;
    let mut s = spec.template;
    s.seed = spec.seeds[0];
    Ok(s)
}

pub const PRESET_NAMES: [&str; 6] = ["fig3", "fig4", "fig5", "fig6", "fig7", "fig8"];

pub fn preset_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig3" => include_str!("../presets/fig3.toml"),
        "fig4" => include_str!("../presets/fig4.toml"),
        "fig5" => include_str!("../presets/fig5.toml"),
        "fig6" => include_str!("../presets/fig6.toml"),
        "fig7" => include_str!("../presets/fig7.toml"),
        "fig8" => include_str!("../presets/fig8.toml"),
        _ => return None,
    })
}

pub fn preset(name: &str) -> Result<SweepSpec, ScenarioError> {
    let src = preset_source(name).ok_or_else(|| ScenarioError::UnknownPreset(name.into()))?;
    parse_sweep_str(src, name)
}
