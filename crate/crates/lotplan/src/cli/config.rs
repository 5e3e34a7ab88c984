//! Scenario configuration: a versioned TOML file referencing the CSV inputs
//! (buses, lines, fleet, prices) plus the economics, resource and fleet
//! parameters that have no natural tabular form.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fleet::{FleetClass, HOURS_PER_DAY};
use crate::grid::{Bus, Line, Network};
use crate::resources::{ChpUnit, WindResource};
use crate::stage1::{CandidateSite, EconomicParams};
use crate::stage2::{PriceSeries, SocConvention};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("config is invalid:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub network: NetworkConfig,
    /// Path to fleet.csv.
    pub fleet: PathBuf,
    /// Path to prices.csv.
    pub prices: PathBuf,
    pub economics: EconomicParams,
    pub candidates: Vec<CandidateSite>,
    pub resources: ResourcesConfig,
    /// Days per year carried by each representative day; must sum to 365.
    pub day_weights: Vec<f64>,
    /// Per-hour multiplier on the peak bus loads.
    pub load_profile: Vec<f64>,
    /// Charging-station rating, kW per plugged vehicle.
    pub station_rate_kw: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_gap")]
    pub gap: f64,
    /// Voltage headroom subtracted in the siting constraints, pu.
    #[serde(default)]
    pub v_margin: f64,
    #[serde(default)]
    pub soc_convention: SocConvention,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub buses: PathBuf,
    pub lines: PathBuf,
    pub base_mva: f64,
    pub base_kv: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourcesConfig {
    pub chp: Vec<ChpUnit>,
    pub wind: Vec<WindResource>,
}

fn default_gap() -> f64 {
    1e-6
}

/// Everything loaded and cross-checked, ready for the pipeline.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub network: Network,
    pub fleet: Vec<FleetClass>,
    /// One price series per representative day, in day_weights order.
    pub prices: Vec<PriceSeries>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, ConfigError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    rdr.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

#[derive(Debug, Deserialize)]
struct PriceRow {
    day: String,
    hour: usize,
    sell: f64,
    buy: f64,
}

/// Groups price rows into one 24-hour series per day label, preserving
/// first-appearance order.
fn group_prices(rows: Vec<PriceRow>) -> Result<Vec<PriceSeries>, Vec<String>> {
    let mut order = Vec::new();
    let mut by_day: BTreeMap<String, Vec<(usize, f64, f64)>> = BTreeMap::new();
    for r in rows {
        if !by_day.contains_key(&r.day) {
            order.push(r.day.clone());
        }
        by_day.entry(r.day).or_default().push((r.hour, r.sell, r.buy));
    }
    let mut out = Vec::new();
    let mut issues = Vec::new();
    for day in order {
        let mut rows = by_day.remove(&day).unwrap();
        rows.sort_by_key(|r| r.0);
        if rows.len() != HOURS_PER_DAY || rows.iter().enumerate().any(|(i, r)| r.0 != i) {
            issues.push(format!(
                "prices: day {day} must have hours 0..23 exactly once ({} rows)",
                rows.len()
            ));
            continue;
        }
        out.push(PriceSeries {
            label: day,
            sell: rows.iter().map(|r| r.1).collect(),
            buy: rows.iter().map(|r| r.2).collect(),
        });
    }
    if issues.is_empty() { Ok(out) } else { Err(issues) }
}

/// Parses the config and every referenced file, collecting all diagnostics.
/// An empty list means the scenario loads cleanly.
pub fn validate_config(path: &Path) -> Vec<String> {
    match load_scenario(path) {
        Ok(_) => Vec::new(),
        Err(ConfigError::Invalid(list)) => list,
        Err(e) => vec![e.to_string()],
    }
}

/// Loads and cross-validates a scenario; all issues are reported at once
/// through [`ConfigError::Invalid`].
pub fn load_scenario(path: &Path) -> Result<Scenario, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let config: ScenarioConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();

    let mut issues = Vec::new();
    if config.schema_version != SCHEMA_VERSION {
        issues.push(format!(
            "schema_version {} unsupported, expected {SCHEMA_VERSION}",
            config.schema_version
        ));
    }

    let buses: Vec<Bus> = read_csv(&resolve(&base, &config.network.buses))
        .map_err(collect_issue(&mut issues))
        .unwrap_or_default();
    let lines: Vec<Line> = read_csv(&resolve(&base, &config.network.lines))
        .map_err(collect_issue(&mut issues))
        .unwrap_or_default();
    let fleet: Vec<FleetClass> = read_csv(&resolve(&base, &config.fleet))
        .map_err(collect_issue(&mut issues))
        .unwrap_or_default();
    let price_rows: Vec<PriceRow> = read_csv(&resolve(&base, &config.prices))
        .map_err(collect_issue(&mut issues))
        .unwrap_or_default();

    let network = if issues.is_empty() {
        match Network::new(buses, lines, config.network.base_mva, config.network.base_kv) {
            Ok(n) => Some(n),
            Err(e) => {
                issues.push(format!("network: {e}"));
                None
            }
        }
    } else {
        None
    };

    for class in &fleet {
        if let Err(e) = class.validate() {
            issues.push(format!("fleet: {e}"));
        }
    }

    let prices = match group_prices(price_rows) {
        Ok(p) => p,
        Err(mut list) => {
            issues.append(&mut list);
            Vec::new()
        }
    };
    for p in &prices {
        if let Err(e) = p.validate() {
            issues.push(format!("prices: {e}"));
        }
    }
    if !prices.is_empty() && prices.len() != config.day_weights.len() {
        issues.push(format!(
            "day_weights has {} entries for {} price days",
            config.day_weights.len(),
            prices.len()
        ));
    }
    let wsum: f64 = config.day_weights.iter().sum();
    if (wsum - 365.0).abs() > 1e-9 {
        issues.push(format!("day_weights sum to {wsum}, expected 365"));
    }
    if config.load_profile.len() != HOURS_PER_DAY {
        issues.push(format!(
            "load_profile has {} entries, expected {HOURS_PER_DAY}",
            config.load_profile.len()
        ));
    }
    if config.load_profile.iter().any(|&f| f < 0.0 || !f.is_finite()) {
        issues.push("load_profile entries must be finite and nonnegative".into());
    }
    if config.station_rate_kw <= 0.0 {
        issues.push("station_rate_kw must be positive".into());
    }
    if config.candidates.is_empty() {
        issues.push("at least one candidate site is required".into());
    }
    if let Some(net) = &network {
        for c in &config.candidates {
            if net.bus_index(c.bus).is_none() {
                issues.push(format!("candidate bus {} not in network", c.bus));
            }
            if c.size_cap() <= 0.0 {
                issues.push(format!("candidate at bus {} has no installable size", c.bus));
            }
        }
    }
    if let Err(e) = config.economics.validate() {
        issues.push(format!("economics: {e}"));
    }
    for w in &config.resources.wind {
        if let Err(e) = w.validate() {
            issues.push(format!("wind: {e}"));
        }
    }
    for chp in &config.resources.chp {
        if chp.p_min < 0.0 || chp.p_max < chp.p_min {
            issues.push("chp: need 0 <= p_min <= p_max".into());
        }
    }
    if !(config.gap > 0.0 && config.gap < 1.0) {
        issues.push(format!("gap {} must be in (0, 1)", config.gap));
    }

    if !issues.is_empty() {
        return Err(ConfigError::Invalid(issues));
    }
    Ok(Scenario {
        network: network.unwrap(),
        config,
        fleet,
        prices,
    })
}

fn collect_issue(issues: &mut Vec<String>) -> impl FnMut(ConfigError) + '_ {
    move |e| issues.push(e.to_string())
}
