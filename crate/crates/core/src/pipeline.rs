//! Command implementations behind the `malaria` binary, usable directly from
//! library code. Every file is written atomically (temp file + rename).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::config::{parse_kv, render_kv, take, KeyValues};
use crate::data::{
    aggregate_provinces, read_dataset, to_country_level, to_csv_bytes, Dataset, IngestOptions,
    MonthKey, RedistrictingMap, Scheme,
};
use crate::error::{Error, Result};
use crate::eval::{
    build_comparison, curve_csv, curve_svg, persistence_baseline, region_label, report_regions,
    totals_line, ForecastReport, ModelKind,
};
use crate::impute::{impute_dataset, ImputeParams, ProvinceImputation};
use crate::lstm::{read_model, train, write_model, TrainConfig, TrainedModel};
use crate::math::derive_seed;
use crate::synth::{generate, SynthConfig};
use crate::window::{
    make_windows, split_train_test, Variant, WindowSpec, DEFAULT_LOOKBACK, DEFAULT_TRAIN_FRACTION,
};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "MALARIA_OUT_DIR";
const FALLBACK_OUT_DIR: &str = "malaria-out";

pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(FALLBACK_OUT_DIR))
}

/// Seed for one pipeline stage, derived from the global seed.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    derive_seed(seed, stage)
}

/// Lowercase, filesystem-friendly region name.
pub fn slug(region: &str) -> String {
    region
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::Argument(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    if let Err(e) = fs::write(&tmp, bytes) {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(&tmp, e));
    }
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_any(path: &Path) -> Result<Dataset> {
    read_dataset(path, &IngestOptions::default())
}

/// One-step forecasts use observed lagged cases; recursive forecasts feed
/// earlier predictions back in across the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForecastMode {
    OneStep,
    Recursive,
}

impl ForecastMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ForecastMode::OneStep => "one-step",
            ForecastMode::Recursive => "recursive",
        }
    }
}

impl FromStr for ForecastMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one-step" => Ok(ForecastMode::OneStep),
            "recursive" => Ok(ForecastMode::Recursive),
            _ => Err(Error::Argument(format!(
                "unknown forecast mode '{s}' (one-step|recursive)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    New,
    Country,
}

impl FromStr for Level {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "new" => Ok(Level::New),
            "country" => Ok(Level::Country),
            _ => Err(Error::Argument(format!(
                "unknown level '{s}' (new|country)"
            ))),
        }
    }
}

pub fn cmd_synth(
    cfg: &SynthConfig,
    truth_path: &Path,
    masked_path: &Path,
) -> Result<(Dataset, Dataset)> {
    let (truth, masked) = generate(cfg)?;
    let t = to_csv_bytes(&truth)?;
    let m = to_csv_bytes(&masked)?;
    write_atomic(truth_path, &t)?;
    write_atomic(masked_path, &m)?;
    Ok((truth, masked))
}

fn impute_log_csv(log: &[ProvinceImputation]) -> String {
    let mut s = String::from("province,missing,iterations,final_delta\n");
    for p in log {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            p.province, p.missing, p.iterations_run, p.final_delta
        );
    }
    s
}

/// Imputes every province of `input`; writes the completed CSV and a
/// per-province iteration log.
pub fn cmd_impute(
    input: &Path,
    output: &Path,
    log_path: &Path,
    params: &ImputeParams,
    seed: u64,
) -> Result<Vec<ProvinceImputation>> {
    let d = read_any(input)?;
    let (done, log) = impute_dataset(&d, params, seed)?;
    let bytes = to_csv_bytes(&done)?;
    write_atomic(output, &bytes)?;
    write_atomic(log_path, impute_log_csv(&log).as_bytes())?;
    Ok(log)
}

/// Aggregates old provinces into the new scheme, or any province scheme to
/// the country series.
pub fn aggregate(d: &Dataset, map: &RedistrictingMap, level: Level) -> Result<Dataset> {
    let new = match d.scheme() {
        Scheme::Old => aggregate_provinces(d, map)?,
        Scheme::New if level == Level::Country => d.clone(),
        s => {
            return Err(Error::Precondition(format!(
                "cannot aggregate a {} dataset to the {} level",
                s.as_str(),
                if level == Level::New {
                    "new-province"
                } else {
                    "country"
                }
            )))
        }
    };
    match level {
        Level::New => Ok(new),
        Level::Country => to_country_level(&new),
    }
}

pub fn cmd_aggregate(
    input: &Path,
    map: Option<&Path>,
    level: Level,
    output: &Path,
) -> Result<Dataset> {
    let d = read_any(input)?;
    let map = match map {
        Some(p) => RedistrictingMap::read(p)?,
        None => RedistrictingMap::burundi(),
    };
    let out = aggregate(&d, &map, level)?;
    write_atomic(output, &to_csv_bytes(&out)?)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowConfig {
    pub lookback: usize,
    pub train_fraction: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            lookback: DEFAULT_LOOKBACK,
            train_fraction: DEFAULT_TRAIN_FRACTION,
        }
    }
}

fn loss_csv(history: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in history.iter().enumerate() {
        let _ = writeln!(s, "{},{l}", i + 1);
    }
    s
}

/// Trains one region's model on the training part of its series.
pub fn train_region(
    d: &Dataset,
    region: &str,
    variant: Variant,
    window: WindowConfig,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    let series = d
        .series(region)
        .ok_or_else(|| Error::Argument(format!("region '{region}' not in input")))?;
    let w = make_windows(series, WindowSpec::new(window.lookback, variant))?;
    let (tr, _) = split_train_test(&w, window.train_fraction)?;
    let mut model = train(&tr, cfg)?;
    model.labels.insert("region".into(), region.to_string());
    model
        .labels
        .insert("train_fraction".into(), window.train_fraction.to_string());
    model.labels.insert("seed".into(), cfg.seed.to_string());
    Ok(model)
}

pub fn cmd_train(
    input: &Path,
    region: &str,
    variant: Variant,
    window: WindowConfig,
    cfg: &TrainConfig,
    model_path: &Path,
    loss_path: &Path,
) -> Result<TrainedModel> {
    let d = read_any(input)?;
    let model = train_region(&d, region, variant, window, cfg)?;
    write_atomic(model_path, write_model(&model).as_bytes())?;
    write_atomic(loss_path, loss_csv(&model.loss_history).as_bytes())?;
    Ok(model)
}

/// Forecast rows over the test horizon of the model's region.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRow {
    pub region: String,
    pub variant: Variant,
    pub month: MonthKey,
    pub observed: f64,
    pub predicted: f64,
    pub persistence: f64,
}

const FORECAST_HEADER: &str = "region,variant,month,observed,predicted,persistence";

pub fn forecast_region(
    model: &TrainedModel,
    d: &Dataset,
    mode: ForecastMode,
) -> Result<Vec<ForecastRow>> {
    let label = |k: &str| {
        model
            .labels
            .get(k)
            .ok_or_else(|| Error::Format(format!("model has no '{k}' label")))
    };
    let region = label("region")?;
    let fraction: f64 = label("train_fraction")?
        .parse()
        .map_err(|_| Error::Format("bad train_fraction label".into()))?;
    let series = d
        .series(region)
        .ok_or_else(|| Error::Argument(format!("region '{region}' not in input")))?;
    let w = make_windows(series, model.spec)?;
    let (_, test) = split_train_test(&w, fraction)?;
    let predicted = match mode {
        ForecastMode::OneStep => model.predict_raw(&test.raw_inputs)?,
        ForecastMode::Recursive => model.predict_recursive(&test.raw_inputs)?,
    };
    let persistence = persistence_baseline(&test.raw_inputs, model.spec.variant)?;
    Ok((0..test.len())
        .map(|i| ForecastRow {
            region: region.clone(),
            variant: model.spec.variant,
            month: test.months[i],
            observed: test.raw_targets[i],
            predicted: predicted[i],
            persistence: persistence[i],
        })
        .collect())
}

pub fn forecast_csv(rows: &[ForecastRow]) -> String {
    let mut s = format!("{FORECAST_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.region, r.variant, r.month, r.observed, r.predicted, r.persistence
        );
    }
    s
}

pub fn parse_forecast_csv(text: &str) -> Result<Vec<ForecastRow>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != FORECAST_HEADER {
        return Err(Error::Format(format!(
            "forecast header must be '{FORECAST_HEADER}'"
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i as u64 + 2;
        let bad = |m: String| Error::Row { row, message: m };
        let num = |k: usize| -> Result<f64> {
            rec[k]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("'{}' is not a number", &rec[k])))
        };
        out.push(ForecastRow {
            region: rec[0].to_string(),
            variant: rec[1].parse().map_err(|e: Error| bad(e.to_string()))?,
            month: rec[2].parse().map_err(|e: Error| bad(e.to_string()))?,
            observed: num(3)?,
            predicted: num(4)?,
            persistence: num(5)?,
        });
    }
    Ok(out)
}

pub fn cmd_forecast(
    model_path: &Path,
    input: &Path,
    output: &Path,
    mode: ForecastMode,
) -> Result<Vec<ForecastRow>> {
    let model = read_model(&read_text(model_path)?)?;
    let d = read_any(input)?;
    let rows = forecast_region(&model, &d, mode)?;
    write_atomic(output, forecast_csv(&rows).as_bytes())?;
    Ok(rows)
}

/// Evaluation outputs, keyed by path relative to the report directory.
pub fn evaluate(rows: &[ForecastRow]) -> Result<BTreeMap<PathBuf, String>> {
    let mut groups: BTreeMap<(String, Variant), Vec<&ForecastRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.region.clone(), r.variant))
            .or_default()
            .push(r);
    }
    let mut reports = Vec::new();
    let mut baselines: BTreeMap<String, ForecastReport> = BTreeMap::new();
    for ((region, variant), g) in &groups {
        let months: Vec<MonthKey> = g.iter().map(|r| r.month).collect();
        if months.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::Format(format!(
                "{variant} forecast for {region} has unordered or repeated months"
            )));
        }
        let observed: Vec<f64> = g.iter().map(|r| r.observed).collect();
        let rep = |p: Vec<f64>, k| {
            ForecastReport::new(region.clone(), k, months.clone(), observed.clone(), p)
        };
        reports.push(rep(
            g.iter().map(|r| r.predicted).collect(),
            ModelKind::from(*variant),
        )?);
        if !baselines.contains_key(region) {
            baselines.insert(
                region.clone(),
                rep(
                    g.iter().map(|r| r.persistence).collect(),
                    ModelKind::Baseline,
                )?,
            );
        }
    }
    let table = build_comparison(&reports)?;

    let mut out = BTreeMap::new();
    out.insert(PathBuf::from("comparison.txt"), table.render_text());
    out.insert(PathBuf::from("comparison.csv"), table.render_csv());
    let mut totals = String::new();
    let mut baseline = String::from("region,persistence_rmse\n");
    for region in report_regions() {
        for kind in [ModelKind::Univariate, ModelKind::Multivariate] {
            let r = reports
                .iter()
                .find(|r| r.region == region && r.kind == kind)
                .expect("checked by build_comparison");
            totals.push_str(&totals_line(r));
            totals.push('\n');
            let stem = format!("curves/{}_{}", slug(region), kind);
            out.insert(PathBuf::from(format!("{stem}.csv")), curve_csv(r));
            out.insert(PathBuf::from(format!("{stem}.svg")), curve_svg(r));
        }
        let b = &baselines[region];
        let _ = writeln!(baseline, "{},{:.2}", region_label(region), b.rmse);
    }
    out.insert(PathBuf::from("totals.txt"), totals);
    out.insert(PathBuf::from("baseline.csv"), baseline);
    Ok(out)
}

/// Reads forecast CSVs and writes the comparison table, totals, baseline
/// RMSEs and per-region curves under `out_dir`. Nothing is written when the
/// forecast set is incomplete.
pub fn cmd_evaluate(forecasts: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut rows = Vec::new();
    for p in forecasts {
        rows.extend(parse_forecast_csv(&read_text(p)?)?);
    }
    let files = evaluate(&rows)?;
    let mut written = Vec::with_capacity(files.len());
    for (rel, text) in files {
        let p = out_dir.join(rel);
        write_atomic(&p, text.as_bytes())?;
        written.push(p);
    }
    Ok(written)
}

fn parse_optional<T: FromStr>(kv: &KeyValues, key: &str, none: &str) -> Result<Option<Option<T>>> {
    match kv.get(key) {
        None => Ok(None),
        Some(v) if v == none => Ok(Some(None)),
        Some(v) => v
            .parse()
            .map(|x| Some(Some(x)))
            .map_err(|_| Error::Config(format!("'{key}': cannot parse '{v}'"))),
    }
}

fn show_optional<T: ToString>(v: Option<T>, none: &str) -> String {
    v.map_or_else(|| none.to_string(), |x| x.to_string())
}

/// Everything `cmd_pipeline` needs. Built from flat `section.key = value`
/// text; see [`PipelineConfig::from_kv`] for the keys.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Observed 18-province (or 5-province) CSV; synthetic data when absent.
    pub input: Option<PathBuf>,
    pub map: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub synth: SynthConfig,
    synth_profiles: KeyValues,
    pub window: WindowConfig,
    pub forecast_mode: ForecastMode,
    pub train: TrainConfig,
    pub impute: ImputeParams,
}

const TOP_KEYS: [&str; 4] = ["seed", "paths.input", "paths.map", "paths.out_dir"];
const WINDOW_KEYS: [&str; 3] = ["window.lookback", "window.train_fraction", "forecast.mode"];
const TRAIN_KEYS: [&str; 8] = [
    "train.hidden",
    "train.epochs",
    "train.learning_rate",
    "train.beta1",
    "train.beta2",
    "train.epsilon",
    "train.batch_size",
    "train.clip_norm",
];
const IMPUTE_KEYS: [&str; 6] = [
    "impute.n_trees",
    "impute.mtry",
    "impute.min_samples_leaf",
    "impute.max_depth",
    "impute.max_iter",
    "impute.bootstrap",
];

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig::from_kv(&KeyValues::new()).expect("defaults are valid")
    }
}

impl PipelineConfig {
    /// Keys: `seed`; `paths.{input,map,out_dir}`; `synth.*` (the synthetic
    /// generator's keys); `window.{lookback,train_fraction}`; `forecast.mode`;
    /// `train.{hidden,epochs,learning_rate,beta1,beta2,epsilon,batch_size,clip_norm}`;
    /// `impute.{n_trees,mtry,min_samples_leaf,max_depth,max_iter,bootstrap}`.
    /// Stage seeds derive from `seed` unless `synth.seed` is set.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut seed = 0u64;
        take(kv, "seed", &mut seed)?;

        let mut synth_kv = KeyValues::new();
        let mut synth_profiles = KeyValues::new();
        for (k, v) in kv {
            if let Some(rest) = k.strip_prefix("synth.") {
                synth_kv.insert(rest.to_string(), v.clone());
                if rest.starts_with("profile.") {
                    synth_profiles.insert(k.clone(), v.clone());
                }
            } else if !(TOP_KEYS.contains(&k.as_str())
                || WINDOW_KEYS.contains(&k.as_str())
                || TRAIN_KEYS.contains(&k.as_str())
                || IMPUTE_KEYS.contains(&k.as_str()))
            {
                return Err(Error::Config(format!("unknown key '{k}'")));
            }
        }
        let mut synth = SynthConfig::burundi(stage_seed(seed, "synth"));
        synth.apply(&synth_kv)?;

        let mut window = WindowConfig::default();
        take(kv, "window.lookback", &mut window.lookback)?;
        take(kv, "window.train_fraction", &mut window.train_fraction)?;
        if !(window.train_fraction > 0.0 && window.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "window.train_fraction {} outside (0, 1)",
                window.train_fraction
            )));
        }
        if window.lookback == 0 {
            return Err(Error::Config("window.lookback must be positive".into()));
        }
        let mut forecast_mode = ForecastMode::OneStep;
        if let Some(m) = kv.get("forecast.mode") {
            forecast_mode = m.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
        }

        let mut train = TrainConfig::default();
        take(kv, "train.hidden", &mut train.hidden)?;
        take(kv, "train.epochs", &mut train.epochs)?;
        take(kv, "train.learning_rate", &mut train.learning_rate)?;
        take(kv, "train.beta1", &mut train.beta1)?;
        take(kv, "train.beta2", &mut train.beta2)?;
        take(kv, "train.epsilon", &mut train.epsilon)?;
        take(kv, "train.clip_norm", &mut train.clip_norm)?;
        if let Some(b) = parse_optional(kv, "train.batch_size", "full")? {
            train.batch_size = b;
        }
        train.validate().map_err(|e| Error::Config(e.to_string()))?;

        let mut impute = ImputeParams::default();
        take(kv, "impute.n_trees", &mut impute.forest.n_trees)?;
        take(
            kv,
            "impute.min_samples_leaf",
            &mut impute.forest.tree.min_samples_leaf,
        )?;
        take(kv, "impute.max_iter", &mut impute.max_iter)?;
        take(kv, "impute.bootstrap", &mut impute.forest.bootstrap)?;
        if let Some(m) = parse_optional(kv, "impute.mtry", "auto")? {
            impute.forest.tree.mtry = m;
        }
        if let Some(d) = parse_optional(kv, "impute.max_depth", "none")? {
            impute.forest.tree.max_depth = d;
        }

        Ok(PipelineConfig {
            seed,
            input: kv.get("paths.input").map(PathBuf::from),
            map: kv.get("paths.map").map(PathBuf::from),
            out_dir: kv
                .get("paths.out_dir")
                .map_or_else(default_out_dir, PathBuf::from),
            synth,
            synth_profiles,
            window,
            forecast_mode,
            train,
            impute,
        })
    }

    /// Parses a config file and then applies `overrides` on top.
    pub fn load(path: Option<&Path>, overrides: &KeyValues) -> Result<Self> {
        let mut kv = match path {
            Some(p) => parse_kv(&read_text(p)?)?,
            None => KeyValues::new(),
        };
        kv.extend(overrides.iter().map(|(k, v)| (k.clone(), v.clone())));
        Self::from_kv(&kv)
    }

    /// The fully resolved configuration, including defaults; parsing it back
    /// yields an equal config.
    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        let mut put = |k: &str, v: String| {
            kv.insert(k.to_string(), v);
        };
        put("seed", self.seed.to_string());
        if let Some(p) = &self.input {
            put("paths.input", p.display().to_string());
        }
        if let Some(p) = &self.map {
            put("paths.map", p.display().to_string());
        }
        put("paths.out_dir", self.out_dir.display().to_string());
        let s = &self.synth;
        put("synth.seed", s.seed.to_string());
        put("synth.start", s.start.to_string());
        put("synth.months", s.months.to_string());
        put(
            "synth.provinces",
            s.provinces
                .iter()
                .map(|p| p.name.as_str())
                .collect::<Vec<_>>()
                .join(","),
        );
        put("synth.baseline_incidence", s.baseline_incidence.to_string());
        put("synth.rain_coef", s.rain_coef.to_string());
        put("synth.temp_coef", s.temp_coef.to_string());
        put("synth.rain_lag", s.rain_lag.to_string());
        put("synth.temp_lag", s.temp_lag.to_string());
        put("synth.climate_noise", s.climate_noise.to_string());
        put("synth.case_noise", s.case_noise.to_string());
        put("synth.missingness", s.missingness.to_string());
        put("window.lookback", self.window.lookback.to_string());
        put(
            "window.train_fraction",
            self.window.train_fraction.to_string(),
        );
        put("forecast.mode", self.forecast_mode.as_str().to_string());
        let t = &self.train;
        put("train.hidden", t.hidden.to_string());
        put("train.epochs", t.epochs.to_string());
        put("train.learning_rate", t.learning_rate.to_string());
        put("train.beta1", t.beta1.to_string());
        put("train.beta2", t.beta2.to_string());
        put("train.epsilon", t.epsilon.to_string());
        put("train.batch_size", show_optional(t.batch_size, "full"));
        put("train.clip_norm", t.clip_norm.to_string());
        let f = &self.impute.forest;
        put("impute.n_trees", f.n_trees.to_string());
        put("impute.mtry", show_optional(f.tree.mtry, "auto"));
        put(
            "impute.min_samples_leaf",
            f.tree.min_samples_leaf.to_string(),
        );
        put("impute.max_depth", show_optional(f.tree.max_depth, "none"));
        put("impute.max_iter", self.impute.max_iter.to_string());
        put("impute.bootstrap", f.bootstrap.to_string());
        kv.extend(self.synth_profiles.clone());
        kv
    }

    pub fn impute_seed(&self) -> u64 {
        stage_seed(self.seed, "impute")
    }

    pub fn train_config(&self, region: &str, variant: Variant) -> TrainConfig {
        TrainConfig {
            seed: stage_seed(self.seed, &format!("train/{region}/{variant}")),
            ..self.train
        }
    }
}

/// Pipeline output paths relative to the output directory.
pub mod layout {
    use std::path::PathBuf;

    use crate::window::Variant;

    use super::slug;

    pub const RUN_LOG: &str = "run.log";
    pub const TRUTH: &str = "data/truth.csv";
    pub const MASKED: &str = "data/masked.csv";
    pub const IMPUTED: &str = "data/imputed.csv";
    pub const IMPUTE_LOG: &str = "logs/impute.csv";
    pub const PROVINCES: &str = "data/provinces.csv";
    pub const COUNTRY: &str = "data/country.csv";
    pub const REPORT_DIR: &str = "report";

    pub fn model(region: &str, v: Variant) -> PathBuf {
        PathBuf::from(format!("models/{}_{v}.model", slug(region)))
    }

    pub fn loss(region: &str, v: Variant) -> PathBuf {
        PathBuf::from(format!("models/{}_{v}_loss.csv", slug(region)))
    }

    pub fn forecast(region: &str, v: Variant) -> PathBuf {
        PathBuf::from(format!("forecasts/{}_{v}.csv", slug(region)))
    }
}

/// Summary of a finished pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    /// Output files, relative to the output directory, sorted.
    pub files: Vec<PathBuf>,
    pub imputation: Vec<ProvinceImputation>,
    pub table: String,
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

fn run_stages(cfg: &PipelineConfig, stage: &Path) -> Result<(Vec<ProvinceImputation>, String)> {
    let at = |rel: &str| stage.join(rel);
    let input = match &cfg.input {
        Some(p) => p.clone(),
        None => {
            cmd_synth(&cfg.synth, &at(layout::TRUTH), &at(layout::MASKED))?;
            at(layout::MASKED)
        }
    };
    let imputation = cmd_impute(
        &input,
        &at(layout::IMPUTED),
        &at(layout::IMPUTE_LOG),
        &cfg.impute,
        cfg.impute_seed(),
    )?;
    let map = cfg.map.as_deref();
    cmd_aggregate(
        &at(layout::IMPUTED),
        map,
        Level::New,
        &at(layout::PROVINCES),
    )?;
    cmd_aggregate(
        &at(layout::IMPUTED),
        map,
        Level::Country,
        &at(layout::COUNTRY),
    )?;

    let mut forecasts = Vec::new();
    for region in report_regions() {
        let data = if region == crate::data::COUNTRY {
            layout::COUNTRY
        } else {
            layout::PROVINCES
        };
        for variant in Variant::ALL {
            let model = stage.join(layout::model(region, variant));
            cmd_train(
                &at(data),
                region,
                variant,
                cfg.window,
                &cfg.train_config(region, variant),
                &model,
                &stage.join(layout::loss(region, variant)),
            )?;
            let fc = stage.join(layout::forecast(region, variant));
            cmd_forecast(&model, &at(data), &fc, cfg.forecast_mode)?;
            forecasts.push(fc);
        }
    }
    cmd_evaluate(&forecasts, &at(layout::REPORT_DIR))?;
    let table = read_text(&at(&format!("{}/comparison.txt", layout::REPORT_DIR)))?;
    Ok((imputation, table))
}

/// Effective configuration plus the derived stage seeds.
pub fn run_log(cfg: &PipelineConfig) -> String {
    let mut s = render_kv(&cfg.to_kv());
    let _ = writeln!(s, "# derived seeds");
    let _ = writeln!(s, "# impute = {}", cfg.impute_seed());
    for region in report_regions() {
        for v in Variant::ALL {
            let _ = writeln!(
                s,
                "# train/{region}/{v} = {}",
                cfg.train_config(region, v).seed
            );
        }
    }
    s
}

/// Synthesize (or read) → impute → aggregate → train → forecast → evaluate.
/// Everything is produced in a staging directory inside `out_dir` and moved
/// into place only after every stage succeeded.
pub fn cmd_pipeline(cfg: &PipelineConfig) -> Result<PipelineRun> {
    let out = &cfg.out_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let stage = out.join(format!(".staging{}", std::process::id()));
    if stage.exists() {
        fs::remove_dir_all(&stage).map_err(|e| Error::io(&stage, e))?;
    }
    let result = (|| {
        write_atomic(&stage.join(layout::RUN_LOG), run_log(cfg).as_bytes())?;
        let (imputation, table) = run_stages(cfg, &stage)?;
        let mut files = Vec::new();
        collect_files(&stage, &stage, &mut files)?;
        files.sort();
        for rel in &files {
            let dst = out.join(rel);
            if let Some(dir) = dst.parent() {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            fs::rename(stage.join(rel), &dst).map_err(|e| Error::io(&dst, e))?;
        }
        Ok(PipelineRun {
            files,
            imputation,
            table,
        })
    })();
    let _ = fs::remove_dir_all(&stage);
    result
}
