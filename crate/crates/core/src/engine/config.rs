//! Scenario files (TOML) and their validation into a runnable [`Scenario`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::StrategySpec;
use crate::model::{
    roster, AffineClock, ClockParams, Ctv, Geometry, LinkRateVector, Mode, NodeId, RateEntry, RateModel, UtilityFamily, UtilitySpec,
};
use crate::num::{self, Q};
use crate::scheduler::params::{select_parameters, ParamContext, ParamsError, ProtocolParams};

use super::EngineError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n: usize,
    #[serde(default)]
    pub bad: Vec<u32>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_eps")]
    pub eps: String,
    #[serde(default)]
    pub clocks: ClockConfig,
    pub rates: Option<RatesConfig>,
    pub utility: Option<UtilityConfig>,
    pub adversary: Option<StrategySpec>,
    #[serde(default)]
    pub params: ParamsConfig,
}

fn default_eps() -> String {
    "1/4".into()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockConfig {
    #[serde(default = "default_a_max")]
    pub a_max: String,
    #[serde(default = "default_one")]
    pub u0: String,
    #[serde(default = "default_quantum")]
    pub quantum: String,
    #[serde(default = "default_one")]
    pub k_delay: String,
    /// Per-node clocks; generated from the seed when empty.
    #[serde(default)]
    pub explicit: Vec<ClockEntry>,
}

impl Default for ClockConfig {
    fn default() -> Self {
        ClockConfig { a_max: default_a_max(), u0: default_one(), quantum: default_quantum(), k_delay: default_one(), explicit: Vec::new() }
    }
}

fn default_a_max() -> String {
    "3/2".into()
}

fn default_one() -> String {
    "1".into()
}

fn default_quantum() -> String {
    "1/1048576".into()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockEntry {
    pub skew: String,
    pub turn_on: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub lambda: Vec<String>,
    pub geometry: Option<GeometryConfig>,
    #[serde(default)]
    pub table: Vec<TableRow>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub positions: Vec<[f64; 2]>,
    pub power: f64,
    pub noise: f64,
    pub path_loss_exp: f64,
    pub thresholds: Vec<f64>,
    pub max_active: usize,
}

/// One explicit CTV row. Links are written `"i->j"`; `jammed` defaults to
/// `rates` (jamming has no effect on this CTV).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableRow {
    pub ctv: String,
    #[serde(default)]
    pub rates: BTreeMap<String, String>,
    pub jammed: Option<BTreeMap<String, String>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityConfig {
    pub family: UtilityFamily,
    pub weights: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub k_r: Option<u64>,
    pub w_unit: Option<String>,
    pub t_ceiling: Option<String>,
    pub oracle_budget: Option<usize>,
    #[serde(rename = "override")]
    pub overrides: Option<OverrideConfig>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideConfig {
    pub n_iter: Option<u64>,
    pub t_life: Option<String>,
    pub data_time: Option<String>,
    pub dead_time: Option<String>,
}

/// Everything a run needs, validated.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub n: usize,
    pub seed: u64,
    pub good: BTreeSet<NodeId>,
    pub bad: BTreeSet<NodeId>,
    pub clocks: Vec<AffineClock>,
    pub cp: ClockParams,
    pub model: RateModel,
    pub utility: UtilitySpec,
    pub strategy: StrategySpec,
    pub params: ProtocolParams,
    pub oracle_budget: usize,
}

pub const DEFAULT_ORACLE_BUDGET: usize = 1 << 16;

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, EngineError> {
        toml::from_str(text).map_err(|e| {
            let field = e.span().map(|s| format!("line {}", text[..s.start].lines().count().max(1))).unwrap_or_else(|| "<file>".into());
            EngineError::ConfigInvalid(vec![FieldError { field, message: e.message().to_string() }])
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Parses `"i->j"`.
pub fn parse_link(s: &str, n: usize) -> Option<(NodeId, NodeId)> {
    let (a, b) = s.split_once("->")?;
    let a: u32 = a.trim().parse().ok()?;
    let b: u32 = b.trim().parse().ok()?;
    let ok = |v: u32| v >= 1 && v as usize <= n;
    (ok(a) && ok(b) && a != b).then_some((NodeId(a), NodeId(b)))
}

pub fn link_key(i: NodeId, j: NodeId) -> String {
    format!("{i}->{j}")
}

struct Errors(Vec<FieldError>);

impl Errors {
    fn add(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.0.push(FieldError { field: field.into(), message: message.into() });
    }

    fn q(&mut self, field: &str, s: &str) -> Option<Q> {
        let v = num::parse(s);
        if v.is_none() {
            self.add(field, format!("not a number: {s:?}"));
        }
        v
    }
}

fn rate_vector(errs: &mut Errors, field: &str, n: usize, map: &BTreeMap<String, String>, lambda: &[Q]) -> LinkRateVector {
    let mut v = LinkRateVector::zeros(n);
    for (k, r) in map {
        let f = format!("{field}.{k:?}");
        let Some((i, j)) = parse_link(k, n) else {
            errs.add(f, "expected a link \"i->j\" between distinct nodes 1..n");
            continue;
        };
        if let Some(r) = errs.q(&f, r) {
            if !r.is_zero() && !lambda.contains(&r) {
                errs.add(f, "rate is not in lambda");
            }
            v.set(i, j, r);
        }
    }
    v
}

impl Scenario {
    pub fn from_config(cfg: &ScenarioConfig, seed: Option<u64>) -> Result<Scenario, EngineError> {
        let mut errs = Errors(Vec::new());
        let n = cfg.n;
        if !(2..=8).contains(&n) {
            errs.add("n", "must lie in 2..=8");
            return Err(EngineError::ConfigInvalid(errs.0));
        }
        let seed = seed.unwrap_or(cfg.seed);
        let mut bad = BTreeSet::new();
        for (k, &b) in cfg.bad.iter().enumerate() {
            if b == 0 || b as usize > n {
                errs.add(format!("bad[{k}]"), format!("node {b} outside 1..={n}"));
            } else {
                bad.insert(NodeId(b));
            }
        }
        let good: BTreeSet<NodeId> = roster(n).filter(|v| !bad.contains(v)).collect();
        if good.is_empty() {
            errs.add("bad", "at least one node must be good");
        }
        if !bad.is_empty() && cfg.adversary.is_none() {
            errs.add("adversary", "required when bad nodes are configured");
        }
        let eps = errs.q("eps", &cfg.eps);
        if let Some(e) = &eps {
            if !e.is_positive() || *e >= Q::one() {
                errs.add("eps", "must lie in (0, 1)");
            }
        }

        let c = &cfg.clocks;
        let a_max = errs.q("clocks.a_max", &c.a_max);
        let u0 = errs.q("clocks.u0", &c.u0);
        let quantum = errs.q("clocks.quantum", &c.quantum);
        let k_delay = errs.q("clocks.k_delay", &c.k_delay);
        if let Some(a) = &a_max {
            if *a < Q::one() {
                errs.add("clocks.a_max", "must be >= 1");
            }
        }
        if let Some(u) = &u0 {
            if u.is_negative() {
                errs.add("clocks.u0", "must be >= 0");
            }
        }
        if let Some(q) = &quantum {
            if !q.is_positive() {
                errs.add("clocks.quantum", "must be > 0");
            }
        }
        if let Some(k) = &k_delay {
            if *k < Q::one() {
                errs.add("clocks.k_delay", "must be >= 1");
            }
        }

        let (model, utility) = match (&cfg.rates, &cfg.utility) {
            (None, _) => {
                errs.add("rates", "missing rate table (give rates.table rows or rates.geometry)");
                (None, None)
            }
            (Some(r), u) => {
                let model = build_model(&mut errs, n, r, &bad);
                let utility = match u {
                    None => {
                        errs.add("utility", "missing utility section");
                        None
                    }
                    Some(u) => {
                        let mut w = BTreeMap::new();
                        for (k, v) in &u.weights {
                            let f = format!("utility.weights.{k:?}");
                            match (parse_link(k, n), errs.q(&f, v)) {
                                (Some(l), Some(v)) if !v.is_negative() => {
                                    w.insert(l, v);
                                }
                                (None, _) => errs.add(f, "expected a link \"i->j\""),
                                (_, Some(_)) => errs.add(f, "weight must be >= 0"),
                                _ => {}
                            }
                        }
                        Some(UtilitySpec { family: u.family, weights: w })
                    }
                };
                (model, utility)
            }
        };

        let clocks = match (&a_max, &u0, &quantum) {
            (Some(a), Some(u), Some(_)) => make_clocks(&mut errs, n, seed, a, u, &c.explicit),
            _ => Vec::new(),
        };

        if let Some(spec) = &cfg.adversary {
            if let StrategySpec::PartitionSeeker { side_a, side_b } = spec {
                for v in side_a.iter().chain(side_b) {
                    if !good.contains(&NodeId(*v)) {
                        errs.add("adversary.side", format!("node {v} is not good"));
                    }
                }
            }
        }

        if !errs.0.is_empty() {
            return Err(EngineError::ConfigInvalid(errs.0));
        }
        let (model, utility) = (model.unwrap(), utility.unwrap());
        let (a_max, u0, quantum, k_delay, eps) = (a_max.unwrap(), u0.unwrap(), quantum.unwrap(), k_delay.unwrap(), eps.unwrap());

        let p = &cfg.params;
        let mut ctx = ParamContext { quantum: quantum.clone(), k_delay: k_delay.clone(), ..ParamContext::default() };
        if let Some(w) = &p.w_unit {
            ctx.w_unit = num::parse(w).filter(|v| v.is_positive()).ok_or_else(|| one_err("params.w_unit", "must be a positive number"))?;
        }
        if let Some(t) = &p.t_ceiling {
            ctx.t_ceiling = num::parse(t).ok_or_else(|| one_err("params.t_ceiling", "not a number"))?;
        }
        let k_r = p.k_r.unwrap_or_else(|| distinct_vectors(&model) as u64);
        let mut params = select_parameters(n, &a_max, &u0, k_r, &eps, &ctx).map_err(|e| match e {
            ParamsError::BadEpsilon => one_err("eps", "must lie in (0, 1)"),
            ParamsError::NoFeasibleParams(m) => EngineError::NoFeasibleParams(m),
        })?;
        if let Some(o) = &p.overrides {
            let q = |f: &str, s: &Option<String>| -> Result<Option<Q>, EngineError> {
                s.as_ref().map(|s| num::parse(s).filter(|v| v.is_positive()).ok_or_else(|| one_err(f, "must be a positive number"))).transpose()
            };
            if let Some(k) = o.n_iter {
                if k == 0 {
                    return Err(one_err("params.override.n_iter", "must be >= 1"));
                }
                params.n_iter = k;
            }
            if let Some(v) = q("params.override.t_life", &o.t_life)? {
                params.t_life = v;
            }
            if let Some(v) = q("params.override.data_time", &o.data_time)? {
                params.data_time = v;
            }
            if let Some(v) = q("params.override.dead_time", &o.dead_time)? {
                params.dead_time = v;
            }
        }
        let cp = ClockParams { a_max, u0, quantum, k_delay, eps_a: params.eps_a.clone(), eps_b: params.eps_b.clone() };
        cp.validate().map_err(|e| one_err("clocks", &e.to_string()))?;

        Ok(Scenario {
            n,
            seed,
            good,
            bad,
            clocks,
            cp,
            model,
            utility,
            strategy: cfg.adversary.clone().unwrap_or(StrategySpec::AlwaysConform),
            params,
            oracle_budget: p.oracle_budget.unwrap_or(DEFAULT_ORACLE_BUDGET),
        })
    }
}

fn one_err(field: &str, message: &str) -> EngineError {
    EngineError::ConfigInvalid(vec![FieldError { field: field.into(), message: message.into() }])
}

/// Distinct nonzero true rate vectors, the default for `k_r`.
pub fn distinct_vectors(model: &RateModel) -> usize {
    let zero = LinkRateVector::zeros(model.n);
    model.entries.iter().map(|e| &e.rates).filter(|r| **r != zero).collect::<BTreeSet<_>>().len().max(1)
}

fn build_model(errs: &mut Errors, n: usize, r: &RatesConfig, bad: &BTreeSet<NodeId>) -> Option<RateModel> {
    let mut lambda = Vec::new();
    for (k, s) in r.lambda.iter().enumerate() {
        if let Some(v) = errs.q(&format!("rates.lambda[{k}]"), s) {
            if !v.is_positive() {
                errs.add(format!("rates.lambda[{k}]"), "rates must be positive");
            }
            lambda.push(v);
        }
    }
    lambda.sort();
    lambda.dedup();
    if lambda.is_empty() {
        errs.add("rates.lambda", "must name at least one rate");
        return None;
    }
    match (&r.geometry, r.table.is_empty()) {
        (Some(_), false) => {
            errs.add("rates", "give either geometry or table, not both");
            None
        }
        (None, true) => {
            errs.add("rates.table", "missing rate table (give rates.table rows or rates.geometry)");
            None
        }
        (Some(g), true) => {
            if g.positions.len() != n {
                errs.add("rates.geometry.positions", format!("expected {n} positions"));
                return None;
            }
            if g.thresholds.len() != lambda.len() {
                errs.add("rates.geometry.thresholds", "need one threshold per rate in lambda");
                return None;
            }
            let geo = Geometry {
                positions: g.positions.iter().map(|p| (p[0], p[1])).collect(),
                power: g.power,
                noise: g.noise,
                path_loss_exp: g.path_loss_exp,
                thresholds: g.thresholds.clone(),
                max_active: g.max_active,
            };
            match RateModel::geometric(&geo, lambda, bad) {
                Ok(m) => Some(m),
                Err(e) => {
                    errs.add("rates.geometry", e.to_string());
                    None
                }
            }
        }
        (None, false) => {
            let mut entries = Vec::new();
            let mut seen = BTreeSet::new();
            for (k, row) in r.table.iter().enumerate() {
                let f = format!("rates.table[{k}]");
                let ctv = match Ctv::parse(&row.ctv) {
                    Ok(c) if c.n() == n => c,
                    Ok(_) => {
                        errs.add(format!("{f}.ctv"), format!("descriptor must have {n} modes"));
                        continue;
                    }
                    Err(e) => {
                        errs.add(format!("{f}.ctv"), e.to_string());
                        continue;
                    }
                };
                if !seen.insert(ctv.descriptor()) {
                    errs.add(format!("{f}.ctv"), "duplicate CTV");
                }
                if ctv.0.iter().any(|m| matches!(m, Mode::Transmit { to, .. } if to.index() >= n)) {
                    errs.add(format!("{f}.ctv"), "transmits to an unknown node");
                    continue;
                }
                let rates = rate_vector(errs, &format!("{f}.rates"), n, &row.rates, &lambda);
                let jammed = match &row.jammed {
                    Some(j) => rate_vector(errs, &format!("{f}.jammed"), n, j, &lambda),
                    None => rates.clone(),
                };
                entries.push(RateEntry { ctv, rates, jammed });
            }
            let mode_bound = entries.iter().map(|e| e.ctv.n()).max().unwrap_or(0) + 3;
            let model = RateModel { n, lambda, mode_bound, entries };
            let good: BTreeSet<NodeId> = roster(n).filter(|v| !bad.contains(v)).collect();
            if let Err(e) = model.validate(&good) {
                errs.add("rates.table", e.to_string());
            }
            Some(model)
        }
    }
}

fn make_clocks(errs: &mut Errors, n: usize, seed: u64, a: &Q, u0: &Q, explicit: &[ClockEntry]) -> Vec<AffineClock> {
    if !explicit.is_empty() {
        if explicit.len() != n {
            errs.add("clocks.explicit", format!("expected {n} clocks"));
            return Vec::new();
        }
        let mut out = Vec::new();
        for (k, c) in explicit.iter().enumerate() {
            let f = format!("clocks.explicit[{k}]");
            let (Some(s), Some(t)) = (errs.q(&format!("{f}.skew"), &c.skew), errs.q(&format!("{f}.turn_on"), &c.turn_on)) else { continue };
            if s < Q::one() || s > *a {
                errs.add(format!("{f}.skew"), "must lie in [1, a_max]");
            }
            if t.is_negative() || t > *u0 {
                errs.add(format!("{f}.turn_on"), "must lie in [0, u0]");
            }
            out.push(AffineClock::from_turn_on(s, &t));
        }
        return out;
    }
    seeded_clocks(n, seed, a, u0)
}

/// Skews in `[1, a_max]` and turn-on times in `[0, U_0]` on a grid of 1024
/// steps, drawn from the seed.
pub fn seeded_clocks(n: usize, seed: u64, a: &Q, u0: &Q) -> Vec<AffineClock> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = Q::from_integer(1024.into());
    (0..n)
        .map(|_| {
            let ks: i64 = rng.random_range(0..=1024);
            let kt: i64 = rng.random_range(0..=1024);
            let skew = Q::one() + (a - Q::one()) * Q::from_integer(ks.into()) / &steps;
            let t_on = u0 * Q::from_integer(kt.into()) / &steps;
            AffineClock::from_turn_on(skew, &t_on)
        })
        .collect()
}
