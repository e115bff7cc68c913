//! Seeded synthetic stand-in for the province data: seasonal climate, annual
//! population, and case counts driven by lagged rainfall and temperature.
//! A masked copy with climate entries removed at random goes with the truth.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::config::{take, KeyValues};
use crate::data::{expand_population, Dataset, MonthKey, MonthlyRecord, Scheme, OLD_PROVINCES};
use crate::error::{Error, Result};
use crate::math::{derive_seed, Rng};
use crate::window::DEFAULT_LOOKBACK;

/// Shortest series the generator will produce.
pub const MIN_MONTHS: usize = DEFAULT_LOOKBACK + 10;

#[derive(Debug, Clone, PartialEq)]
pub struct ProvinceProfile {
    pub name: String,
    pub temp_base: f64,
    pub temp_amp: f64,
    pub rain_base: f64,
    pub rain_amp: f64,
    pub humidity_base: f64,
    pub humidity_amp: f64,
    /// Seasonal phase shift in months.
    pub phase: f64,
    pub population_start: u64,
    /// Annual growth rate.
    pub population_growth: f64,
}

impl ProvinceProfile {
    /// Deterministic profile for the `i`-th province.
    pub fn derived(name: &str, i: usize) -> Self {
        let k = i as f64;
        ProvinceProfile {
            name: name.to_string(),
            temp_base: 18.5 + (i % 5) as f64 * 1.3,
            temp_amp: 1.2 + (i % 3) as f64 * 0.3,
            rain_base: 105.0 + (i % 4) as f64 * 9.0,
            rain_amp: 65.0 + (i % 3) as f64 * 8.0,
            humidity_base: 68.0 + (i % 4) as f64 * 2.0,
            humidity_amp: 9.0 + (i % 2) as f64 * 2.0,
            phase: (i % 3) as f64 * 0.5,
            population_start: 420_000 + 37_000 * i as u64,
            population_growth: 0.025 + 0.001 * (k % 5.0),
        }
    }

    fn set(&mut self, field: &str, value: &str) -> Result<()> {
        let bad = || {
            Error::Config(format!(
                "profile {}: bad value '{value}' for {field}",
                self.name
            ))
        };
        let num = || value.parse::<f64>().map_err(|_| bad());
        match field {
            "temp_base" => self.temp_base = num()?,
            "temp_amp" => self.temp_amp = num()?,
            "rain_base" => self.rain_base = num()?,
            "rain_amp" => self.rain_amp = num()?,
            "humidity_base" => self.humidity_base = num()?,
            "humidity_amp" => self.humidity_amp = num()?,
            "phase" => self.phase = num()?,
            "population_start" => self.population_start = value.parse().map_err(|_| bad())?,
            "population_growth" => self.population_growth = num()?,
            _ => return Err(Error::Config(format!("unknown profile field '{field}'"))),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub start: MonthKey,
    pub months: usize,
    pub provinces: Vec<ProvinceProfile>,
    /// Cases per person per month at average climate.
    pub baseline_incidence: f64,
    /// Log-rate response to the rainfall anomaly `rain_lag` months earlier.
    pub rain_coef: f64,
    /// Log-rate response to the temperature anomaly `temp_lag` months earlier.
    pub temp_coef: f64,
    pub rain_lag: usize,
    pub temp_lag: usize,
    /// Climate noise standard deviation as a fraction of each amplitude.
    pub climate_noise: f64,
    /// 0 rounds the rate; otherwise Poisson sampling of a log-normally
    /// perturbed rate with this σ.
    pub case_noise: f64,
    /// Probability that any one climate entry is masked.
    pub missingness: f64,
}

impl SynthConfig {
    /// 18 provinces, January 2010 through December 2022.
    pub fn burundi(seed: u64) -> Self {
        SynthConfig {
            seed,
            start: MonthKey::new(2010, 1).expect("valid month"),
            months: 156,
            provinces: OLD_PROVINCES
                .iter()
                .enumerate()
                .map(|(i, n)| ProvinceProfile::derived(n, i))
                .collect(),
            baseline_incidence: 0.05,
            rain_coef: 0.45,
            temp_coef: 0.3,
            rain_lag: 2,
            temp_lag: 1,
            climate_noise: 0.15,
            case_noise: 0.1,
            missingness: 0.05,
        }
    }

    /// Applies `key = value` settings (keys without any section prefix).
    /// `provinces` takes a comma-separated list; `profile.<name>.<field>`
    /// overrides one profile field.
    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        if let Some(list) = kv.get("provinces") {
            self.provinces = list
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .enumerate()
                .map(|(i, n)| {
                    let idx = OLD_PROVINCES.iter().position(|p| *p == n).unwrap_or(i);
                    ProvinceProfile::derived(n, idx)
                })
                .collect();
        }
        take(kv, "seed", &mut self.seed)?;
        if let Some(s) = kv.get("start") {
            self.start = s
                .parse()
                .map_err(|e| Error::Config(format!("start: {e}")))?;
        }
        take(kv, "months", &mut self.months)?;
        take(kv, "baseline_incidence", &mut self.baseline_incidence)?;
        take(kv, "rain_coef", &mut self.rain_coef)?;
        take(kv, "temp_coef", &mut self.temp_coef)?;
        take(kv, "rain_lag", &mut self.rain_lag)?;
        take(kv, "temp_lag", &mut self.temp_lag)?;
        take(kv, "climate_noise", &mut self.climate_noise)?;
        take(kv, "case_noise", &mut self.case_noise)?;
        take(kv, "missingness", &mut self.missingness)?;
        for (k, v) in kv {
            if let Some(rest) = k.strip_prefix("profile.") {
                let (name, field) = rest
                    .rsplit_once('.')
                    .ok_or_else(|| Error::Config(format!("bad profile key '{k}'")))?;
                let p = self
                    .provinces
                    .iter_mut()
                    .find(|p| p.name == name)
                    .ok_or_else(|| Error::Config(format!("no province '{name}' for '{k}'")))?;
                p.set(field, v)?;
            } else if !SYNTH_KEYS.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown synth key '{k}'")));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if self.months < MIN_MONTHS {
            return bad(format!("months {} < minimum {MIN_MONTHS}", self.months));
        }
        if self.provinces.is_empty() {
            return bad("no provinces".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.provinces {
            if !seen.insert(p.name.as_str()) {
                return bad(format!("province '{}' listed twice", p.name));
            }
            let vals = [
                p.temp_base,
                p.temp_amp,
                p.rain_base,
                p.rain_amp,
                p.humidity_base,
                p.humidity_amp,
                p.phase,
                p.population_growth,
            ];
            if vals.iter().any(|v| !v.is_finite()) {
                return bad(format!("profile '{}' has non-finite values", p.name));
            }
            if p.population_start == 0 || p.population_growth <= -1.0 {
                return bad(format!("profile '{}' has no population", p.name));
            }
        }
        if !(0.0..1.0).contains(&self.missingness) {
            return bad(format!("missingness {} outside [0, 1)", self.missingness));
        }
        for (name, v) in [
            ("baseline_incidence", self.baseline_incidence),
            ("climate_noise", self.climate_noise),
            ("case_noise", self.case_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} = {v} must be finite and >= 0"));
            }
        }
        if !self.rain_coef.is_finite() || !self.temp_coef.is_finite() {
            return bad("case coefficients must be finite".into());
        }
        Ok(())
    }
}

const SYNTH_KEYS: [&str; 12] = [
    "seed",
    "start",
    "months",
    "provinces",
    "baseline_incidence",
    "rain_coef",
    "temp_coef",
    "rain_lag",
    "temp_lag",
    "climate_noise",
    "case_noise",
    "missingness",
];

fn seasonal(base: f64, amp: f64, t: i64, phase: f64) -> f64 {
    base + amp * (2.0 * PI * (t as f64 + phase) / 12.0).sin()
}

fn anomaly(v: f64, base: f64, amp: f64) -> f64 {
    if amp > 0.0 {
        (v - base) / amp
    } else {
        0.0
    }
}

/// Returns `(truth, masked)`; `masked` differs only by removed climate
/// entries.
pub fn generate(cfg: &SynthConfig) -> Result<(Dataset, Dataset)> {
    cfg.validate()?;
    let end = cfg.start.offset(cfg.months as i64 - 1);
    let mut annual = BTreeMap::new();
    for p in &cfg.provinces {
        for year in cfg.start.year()..=end.year() {
            let growth = (1.0 + p.population_growth).powi(year - cfg.start.year());
            annual.insert(
                (p.name.clone(), year),
                ((p.population_start as f64 * growth).round() as u64).max(1),
            );
        }
    }
    let population = expand_population(&annual, cfg.start, end)?;
    let lead = cfg.rain_lag.max(cfg.temp_lag) as i64;

    let mut truth = Vec::with_capacity(cfg.months * cfg.provinces.len());
    let mut masked = Vec::with_capacity(truth.capacity());
    for p in &cfg.provinces {
        let mut clim_rng = Rng::new(derive_seed(cfg.seed, &format!("climate/{}", p.name)));
        let mut case_rng = Rng::new(derive_seed(cfg.seed, &format!("cases/{}", p.name)));
        let mut mask_rng = Rng::new(derive_seed(cfg.seed, &format!("mask/{}", p.name)));

        // Climate for `lead` hidden months before the start, so every lag
        // is defined.
        let mut climate = Vec::with_capacity(cfg.months + lead as usize);
        for t in -lead..cfg.months as i64 {
            let mut noisy = |base: f64, amp: f64| -> Result<f64> {
                let v = seasonal(base, amp, t, p.phase);
                let sd = cfg.climate_noise * amp;
                Ok(if sd > 0.0 {
                    v + clim_rng.normal(0.0, sd)?
                } else {
                    v
                })
            };
            let temp = noisy(p.temp_base, p.temp_amp)?;
            let rain = noisy(p.rain_base, p.rain_amp)?.max(0.0);
            let hum = noisy(p.humidity_base, p.humidity_amp)?.clamp(0.0, 100.0);
            climate.push([temp, rain, hum]);
        }

        let pops = &population[&p.name];
        for t in 0..cfg.months {
            let at = t + lead as usize;
            let [temp, rain, hum] = climate[at];
            let rain_lagged = climate[at - cfg.rain_lag][1];
            let temp_lagged = climate[at - cfg.temp_lag][0];
            let log_effect = cfg.rain_coef * anomaly(rain_lagged, p.rain_base, p.rain_amp)
                + cfg.temp_coef * anomaly(temp_lagged, p.temp_base, p.temp_amp);
            let rate = cfg.baseline_incidence * pops[t] as f64 * log_effect.exp();
            let cases = if cfg.case_noise > 0.0 {
                let z = case_rng.normal(0.0, 1.0)?;
                let s = cfg.case_noise;
                case_rng.poisson(rate * (s * z - s * s / 2.0).exp())?
            } else {
                rate.round() as u64
            };
            let rec = MonthlyRecord {
                province: p.name.clone(),
                month: cfg.start.offset(t as i64),
                temp_mean: Some(temp),
                rainfall: Some(rain),
                rel_humidity: Some(hum),
                population: pops[t],
                cases,
            };
            let mut m = rec.clone();
            let mut keep = |v: Option<f64>| {
                if mask_rng.next_f64() < cfg.missingness {
                    None
                } else {
                    v
                }
            };
            m.set_climate([keep(m.temp_mean), keep(m.rainfall), keep(m.rel_humidity)]);
            truth.push(rec);
            masked.push(m);
        }
    }
    Ok((
        Dataset::from_records(Scheme::Old, truth)?,
        Dataset::from_records(Scheme::Old, masked)?,
    ))
}
