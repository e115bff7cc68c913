//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

#![allow(clippy::needless_range_loop)]

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use malaria_forecast::config::parse_kv;
use malaria_forecast::data::{
    aggregate_provinces, to_country_level, Dataset, MonthKey, MonthlyRecord, RedistrictingMap,
    NEW_PROVINCES,
};
use malaria_forecast::eval::{
    persistence_baseline, rmse, totals_line, ComparisonRow, ComparisonTable, ForecastReport,
    ModelKind,
};
use malaria_forecast::impute::{climate_matrix, impute_dataset, mean_impute, nrmse, ImputeParams};
use malaria_forecast::lstm::{gradient_check, train, LstmParams, TrainConfig};
use malaria_forecast::math::{Matrix, Rng};
use malaria_forecast::pipeline::{cmd_pipeline, PipelineConfig};
use malaria_forecast::synth::{generate, SynthConfig};
use malaria_forecast::window::{make_windows, split_train_test, Variant, WindowSpec};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, ok: String, fail: String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(fail)
    }
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn small_pipeline(out: &Path) -> PipelineConfig {
    let text = format!(
        "seed = 11\npaths.out_dir = {}\nsynth.months = 48\nimpute.n_trees = 10\n\
         train.epochs = 15\ntrain.hidden = 6\n",
        out.display()
    );
    PipelineConfig::from_kv(&parse_kv(&text).unwrap()).unwrap()
}

fn report_formats() -> Outcome {
    // Layout, with realistic magnitudes.
    let mut rows: Vec<ComparisonRow> = NEW_PROVINCES
        .iter()
        .map(|r| ComparisonRow {
            region: r.to_string(),
            univariate: 1.0,
            multivariate: 2.0,
        })
        .collect();
    rows[0].univariate = 4868.69;
    rows[0].multivariate = 16777.17;
    rows.push(ComparisonRow {
        region: "Burundi".into(),
        univariate: 3.0,
        multivariate: 4.0,
    });
    let table = ComparisonTable { rows };
    let text = table.render_text();
    let lines: Vec<&str> = text.lines().collect();
    let bujumbura: Vec<&str> = lines[2].split('|').map(str::trim).collect();
    if lines.len() != 9 || bujumbura != ["Bujumbura", "4868.69", "16777.17"] {
        return Err(format!("table layout:\n{text}"));
    }
    if !lines[8].starts_with("Country level: Burundi") {
        return Err("country row is not last".into());
    }
    let country = ForecastReport {
        region: "Burundi".into(),
        kind: ModelKind::Univariate,
        months: vec![],
        observed: vec![],
        predicted: vec![],
        rmse: 0.0,
        observed_total: 12959182.46,
        predicted_total: 12841653.9,
    };
    let line = totals_line(&country);
    let want = "Country level: Burundi | univariate | observed 12959182.46 | predicted 12841653.90 | difference -117528.56";
    if line != want {
        return Err(format!("totals line '{line}'"));
    }

    // The same formats out of a real (small) pipeline run.
    let dir = tempfile::tempdir().unwrap();
    let run = cmd_pipeline(&small_pipeline(dir.path())).map_err(|e| e.to_string())?;
    let curves = run
        .files
        .iter()
        .filter(|p| p.starts_with("report/curves"))
        .count();
    let table_lines = run.table.lines().count();
    let totals = std::fs::read_to_string(dir.path().join("report/totals.txt")).unwrap();
    check(
        curves == 24 && table_lines == 9 && totals.lines().count() == 12,
        "6-row table, 12 totals lines, 12 curve CSV + 12 SVG files".into(),
        format!("{curves} curve files, {table_lines} table lines"),
    )
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let mut rng = Rng::new(1000 + seed);
        let p = LstmParams::init(3, 4, &mut rng).unwrap();
        let data = (0..15).map(|_| rng.uniform(-1.0, 1.0).unwrap()).collect();
        let w = Matrix::from_vec(5, 3, data).unwrap();
        let target = rng.uniform(-1.0, 1.0).unwrap();
        let r = gradient_check(&p, &w, target, 1e-5).unwrap();
        worst = worst.max(r.max_relative_error);
    }
    let t = start.elapsed();
    check(
        worst < 1e-4 && t < Duration::from_secs(10),
        format!("max relative error {worst:.2e} in {t:.2?}"),
        format!("max relative error {worst:.2e} in {t:.2?}"),
    )
}

fn sinusoid_records(n: i64, amplitude: f64) -> Vec<MonthlyRecord> {
    let start = MonthKey::new(2000, 1).unwrap();
    (0..n)
        .map(|t| MonthlyRecord {
            province: "Sinusoid".into(),
            month: start.offset(t),
            temp_mean: Some(20.0),
            rainfall: Some(100.0),
            rel_humidity: Some(70.0),
            population: 100_000,
            cases: (2.0 * amplitude + amplitude * (2.0 * PI * t as f64 / 12.0).sin()).round()
                as u64,
        })
        .collect()
}

fn univariate_learnability() -> Outcome {
    let amplitude = 1000.0;
    let start = Instant::now();
    let w = make_windows(
        &sinusoid_records(200, amplitude),
        WindowSpec::new(12, Variant::Univariate),
    )
    .unwrap();
    let (tr, te) = split_train_test(&w, 0.8).unwrap();
    let cfg = TrainConfig {
        hidden: 16,
        epochs: 500,
        ..Default::default()
    };
    let model = train(&tr, &cfg).unwrap();
    let pred = model.predict_raw(&te.raw_inputs).unwrap();
    let rel = rmse(&te.raw_targets, &pred).unwrap() / amplitude;
    let t = start.elapsed();
    check(
        rel < 0.05 && t < Duration::from_secs(60),
        format!("test RMSE {:.2}% of amplitude in {t:.2?}", rel * 100.0),
        format!("test RMSE {:.2}% of amplitude in {t:.2?}", rel * 100.0),
    )
}

fn multivariate_learnability() -> Outcome {
    let mut wins = 0;
    for seed in 0..20u64 {
        let mut c = SynthConfig::burundi(500 + seed);
        c.climate_noise = 0.0;
        c.case_noise = 0.0;
        c.missingness = 0.0;
        let region = c.provinces[seed as usize % c.provinces.len()].name.clone();
        let (truth, _) = generate(&c).unwrap();
        let w = make_windows(
            truth.series(&region).unwrap(),
            WindowSpec::new(12, Variant::Multivariate),
        )
        .unwrap();
        let (tr, te) = split_train_test(&w, 0.8).unwrap();
        let model = train(
            &tr,
            &TrainConfig {
                seed,
                ..Default::default()
            },
        )
        .unwrap();
        let lstm = rmse(&te.raw_targets, &model.predict_raw(&te.raw_inputs).unwrap()).unwrap();
        let naive = persistence_baseline(&te.raw_inputs, Variant::Multivariate).unwrap();
        if lstm < rmse(&te.raw_targets, &naive).unwrap() {
            wins += 1;
        }
    }
    check(
        wins >= 15,
        format!("multivariate beat persistence in {wins}/20 trials"),
        format!("multivariate beat persistence in only {wins}/20 trials"),
    )
}

fn complete_matrix(d: &Dataset, province: &str) -> Matrix {
    let rows: Vec<Vec<f64>> = d
        .series(province)
        .unwrap()
        .iter()
        .map(|r| r.climate().iter().map(|v| v.unwrap()).collect())
        .collect();
    Matrix::from_rows(&rows).unwrap()
}

fn imputation_oracle() -> Outcome {
    let mut wins = 0;
    let mut preserved = 0;
    for seed in 0..20u64 {
        let mut c = SynthConfig::burundi(700 + seed);
        c.missingness = 0.1;
        c.provinces.truncate(6);
        let (truth, masked) = generate(&c).unwrap();
        let (done, _) = impute_dataset(&masked, &ImputeParams::default(), seed).unwrap();
        let (mut forest, mut mean) = (0.0, 0.0);
        for (name, recs) in masked.iter_series() {
            let mask: Vec<Vec<Option<f64>>> = climate_matrix(recs)
                .into_iter()
                .map(|mut r| {
                    r.truncate(3);
                    r
                })
                .collect();
            let t = complete_matrix(&truth, name);
            forest += nrmse(&t, &complete_matrix(&done, name), &mask).unwrap();
            mean += nrmse(&t, &mean_impute(&mask).unwrap(), &mask).unwrap();
        }
        if forest < mean {
            wins += 1;
        }
        let identical = masked.records().zip(done.records()).all(|(a, b)| {
            a.population == b.population
                && a.cases == b.cases
                && a.climate().iter().zip(b.climate()).all(|(x, y)| match x {
                    Some(x) => y.map(f64::to_bits) == Some(x.to_bits()),
                    None => y.is_some(),
                })
        });
        if identical {
            preserved += 1;
        }
    }
    check(
        wins >= 18 && preserved == 20,
        format!("missForest beat mean imputation in {wins}/20; observed entries identical in {preserved}/20"),
        format!("missForest won {wins}/20; observed entries identical in {preserved}/20"),
    )
}

fn aggregation_conservation() -> Outcome {
    let map = RedistrictingMap::burundi();
    for seed in 0..25u64 {
        let mut c = SynthConfig::burundi(900 + seed);
        c.missingness = 0.0;
        c.months = 22 + (seed as usize * 7) % 40;
        let (old, _) = generate(&c).unwrap();
        let new = aggregate_provinces(&old, &map).unwrap();
        let country = to_country_level(&new).unwrap();
        let groups = map.groups();
        for (t, month) in old.months().into_iter().enumerate() {
            let old_sum: u64 = old.iter_series().map(|(_, s)| s[t].cases).sum();
            let new_sum: u64 = new.iter_series().map(|(_, s)| s[t].cases).sum();
            let cty = country.series("Burundi").unwrap()[t].cases;
            if old_sum != new_sum || new_sum != cty {
                return Err(format!(
                    "seed {seed} {month}: {old_sum} / {new_sum} / {cty}"
                ));
            }
            for (target, members) in &groups {
                let got = new.series(target).unwrap()[t].climate();
                for k in 0..3 {
                    let direct = members
                        .iter()
                        .map(|m| old.series(m).unwrap()[t].climate()[k].unwrap())
                        .sum::<f64>()
                        / members.len() as f64;
                    if (got[k].unwrap() - direct).abs() > 1e-9 {
                        return Err(format!("seed {seed} {target} {month} climate {k}"));
                    }
                }
            }
            let cty_climate = country.series("Burundi").unwrap()[t].climate();
            for k in 0..3 {
                let direct = new
                    .iter_series()
                    .map(|(_, s)| s[t].climate()[k].unwrap())
                    .sum::<f64>()
                    / 5.0;
                if (cty_climate[k].unwrap() - direct).abs() > 1e-9 {
                    return Err(format!("seed {seed} country {month} climate {k}"));
                }
            }
        }
    }
    Ok("cases conserved exactly and climate means within 1e-9 over 25 datasets".into())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_pipeline(dir.path());
    cmd_pipeline(&cfg).map_err(|e| e.to_string())?;
    let first = files_under(dir.path());
    std::fs::remove_dir_all(dir.path()).unwrap();
    cmd_pipeline(&cfg).map_err(|e| e.to_string())?;
    let second = files_under(dir.path());
    let differing: Vec<_> = first
        .iter()
        .filter(|(p, b)| second.get(*p) != Some(b))
        .map(|(p, _)| p.display().to_string())
        .collect();
    check(
        differing.is_empty() && first.len() == second.len(),
        format!("{} artifacts byte-identical across two runs", first.len()),
        format!("differing artifacts: {differing:?}"),
    )
}

fn rmse_closed_forms() -> Outcome {
    let r = rmse(&[3.0, 4.0], &[0.0, 0.0]).unwrap();
    let a = [1.5, -2.0, 1e6];
    let z = rmse(&a, &a).unwrap();
    check(
        (r - 12.5f64.sqrt()).abs() < 5e-13 && z == 0.0,
        format!("rmse({{3,4}},{{0,0}}) = {r:.12}; rmse(a,a) = {z}"),
        format!("rmse({{3,4}},{{0,0}}) = {r:.15}; rmse(a,a) = {z}"),
    )
}

fn split_law() -> Outcome {
    let w = make_windows(
        &sinusoid_records(22, 10.0),
        WindowSpec::new(12, Variant::Univariate),
    )
    .unwrap();
    let (tr, te) = split_train_test(&w, 0.8).unwrap();
    let latest_train = tr.months.iter().max().unwrap();
    let ordered = te.months.iter().all(|m| m > latest_train);
    check(
        w.len() == 10 && tr.len() == 8 && te.len() == 2 && ordered,
        "10 samples split 8/2, test strictly after train".into(),
        format!(
            "{} samples split {}/{}; ordered {ordered}",
            w.len(),
            tr.len(),
            te.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("report formats", report_formats),
        ("gradient correctness", gradient_correctness),
        ("univariate learnability", univariate_learnability),
        ("multivariate learnability", multivariate_learnability),
        ("imputation oracle", imputation_oracle),
        ("aggregation conservation", aggregation_conservation),
        ("determinism", determinism),
        ("rmse closed forms", rmse_closed_forms),
        ("split law", split_law),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {} ({name}): PASS - {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL - {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
