//! missForest: iterative random-forest imputation of missing climate values.
//!
//! Columns are visited in order of increasing missingness. Each visit fits a
//! forest on the rows where the column is observed, using every other column
//! (current imputations included) as features, and overwrites the missing
//! rows with its predictions. Iteration stops once the change statistic
//! stops decreasing, and the matrix from the iteration before is returned.

mod forest;
mod tree;

use std::f64::consts::PI;

pub use forest::{ForestParams, RandomForest};
pub use tree::{RegressionTree, TreeParams};

use crate::data::{Dataset, MonthlyRecord};
use crate::error::{Error, Result};
use crate::math::{derive_seed, Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImputeParams {
    pub forest: ForestParams,
    pub max_iter: usize,
}

impl Default for ImputeParams {
    fn default() -> Self {
        ImputeParams {
            forest: ForestParams::default(),
            max_iter: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputationResult {
    pub completed: Matrix,
    pub iterations_run: usize,
    /// Last computed change statistic (0 when nothing was missing).
    pub final_delta: f64,
}

fn validate(data: &[Vec<Option<f64>>]) -> Result<usize> {
    let cols = data.first().map_or(0, Vec::len);
    if data.is_empty() {
        return Err(Error::Argument("imputation needs at least one row".into()));
    }
    if cols < 2 {
        return Err(Error::Argument(format!(
            "imputation needs at least 2 columns, got {cols}"
        )));
    }
    for (i, row) in data.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::Shape(format!(
                "row {i} has {} columns, expected {cols}",
                row.len()
            )));
        }
        if row.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("row {i} has a non-finite value")));
        }
    }
    for c in 0..cols {
        if data.iter().all(|r| r[c].is_none()) {
            return Err(Error::Argument(format!("column {c} has no observed value")));
        }
    }
    Ok(cols)
}

fn column_means(data: &[Vec<Option<f64>>], cols: usize) -> Vec<f64> {
    (0..cols)
        .map(|c| {
            let obs: Vec<f64> = data.iter().filter_map(|r| r[c]).collect();
            obs.iter().sum::<f64>() / obs.len() as f64
        })
        .collect()
}

/// Fills every missing entry with its column's observed mean.
pub fn mean_impute(data: &[Vec<Option<f64>>]) -> Result<Matrix> {
    let cols = validate(data)?;
    let means = column_means(data, cols);
    let rows: Vec<Vec<f64>> = data
        .iter()
        .map(|r| r.iter().zip(&means).map(|(v, m)| v.unwrap_or(*m)).collect())
        .collect();
    Matrix::from_rows(&rows)
}

/// Normalized squared change over the imputed positions:
/// Σ(new − old)² / Σ new².
fn change_statistic(old: &Matrix, new: &Matrix, missing: &[(usize, usize)]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for &(r, c) in missing {
        let (a, b) = (old.get(r, c), new.get(r, c));
        num += (b - a) * (b - a);
        den += b * b;
    }
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

pub fn missforest(
    data: &[Vec<Option<f64>>],
    params: &ImputeParams,
    rng: &mut Rng,
) -> Result<ImputationResult> {
    let cols = validate(data)?;
    if params.max_iter < 1 {
        return Err(Error::Argument("max_iter must be at least 1".into()));
    }
    let mut current = mean_impute(data)?;
    let missing: Vec<(usize, usize)> = data
        .iter()
        .enumerate()
        .flat_map(|(r, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, v)| v.is_none())
                .map(move |(c, _)| (r, c))
        })
        .collect();
    if missing.is_empty() {
        return Ok(ImputationResult {
            completed: current,
            iterations_run: 0,
            final_delta: 0.0,
        });
    }

    let mut order: Vec<(usize, usize)> = (0..cols)
        .map(|c| (data.iter().filter(|r| r[c].is_none()).count(), c))
        .filter(|(n, _)| *n > 0)
        .collect();
    order.sort();

    let mut previous_delta = f64::INFINITY;
    for iter in 1..=params.max_iter {
        let before = current.clone();
        for &(_, target) in &order {
            let observed: Vec<usize> = (0..data.len())
                .filter(|&r| data[r][target].is_some())
                .collect();
            let absent: Vec<usize> = (0..data.len())
                .filter(|&r| data[r][target].is_none())
                .collect();
            let features = |rows: &[usize]| -> Result<Matrix> {
                let body: Vec<Vec<f64>> = rows
                    .iter()
                    .map(|&r| {
                        (0..cols)
                            .filter(|&c| c != target)
                            .map(|c| current.get(r, c))
                            .collect()
                    })
                    .collect();
                Matrix::from_rows(&body)
            };
            let x_obs = features(&observed)?;
            let y_obs: Vec<f64> = observed.iter().map(|&r| current.get(r, target)).collect();
            let forest = RandomForest::fit(&x_obs, &y_obs, &params.forest, rng)?;
            let predicted = forest.predict(&features(&absent)?)?;
            for (&r, v) in absent.iter().zip(predicted) {
                current.set(r, target, v);
            }
        }
        let delta = change_statistic(&before, &current, &missing);
        if delta >= previous_delta {
            return Ok(ImputationResult {
                completed: before,
                iterations_run: iter,
                final_delta: delta,
            });
        }
        previous_delta = delta;
    }
    Ok(ImputationResult {
        completed: current,
        iterations_run: params.max_iter,
        final_delta: previous_delta,
    })
}

/// Normalized RMSE of imputed against true values over the missing
/// positions: per column, √(mean squared error) / standard deviation of the
/// true column, averaged over columns that had missing entries.
pub fn nrmse(truth: &Matrix, imputed: &Matrix, data: &[Vec<Option<f64>>]) -> Result<f64> {
    if truth.shape() != imputed.shape() || truth.rows() != data.len() {
        return Err(Error::Shape(
            "truth, imputed and mask differ in shape".into(),
        ));
    }
    let mut per_col = Vec::new();
    for c in 0..truth.cols() {
        let miss: Vec<usize> = (0..data.len()).filter(|&r| data[r][c].is_none()).collect();
        if miss.is_empty() {
            continue;
        }
        let col = truth.column(c);
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
        let mse = miss
            .iter()
            .map(|&r| (truth.get(r, c) - imputed.get(r, c)).powi(2))
            .sum::<f64>()
            / miss.len() as f64;
        per_col.push(if var > 0.0 {
            (mse / var).sqrt()
        } else {
            mse.sqrt()
        });
    }
    if per_col.is_empty() {
        return Ok(0.0);
    }
    Ok(per_col.iter().sum::<f64>() / per_col.len() as f64)
}

/// Per-province imputation outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ProvinceImputation {
    pub province: String,
    pub missing: usize,
    pub iterations_run: usize,
    pub final_delta: f64,
}

/// Climate columns plus month-of-year as (sin, cos).
pub fn climate_matrix(records: &[MonthlyRecord]) -> Vec<Vec<Option<f64>>> {
    records
        .iter()
        .map(|r| {
            let angle = 2.0 * PI * f64::from(r.month.month() - 1) / 12.0;
            let [t, rain, h] = r.climate();
            vec![t, rain, h, Some(angle.sin()), Some(angle.cos())]
        })
        .collect()
}

/// Runs missForest separately for each province of `d`, on its three climate
/// columns plus a cyclical month encoding. Population and cases are never
/// touched. Each province draws from its own seed derived from `seed`.
pub fn impute_dataset(
    d: &Dataset,
    params: &ImputeParams,
    seed: u64,
) -> Result<(Dataset, Vec<ProvinceImputation>)> {
    let mut log = Vec::new();
    let out = d.map_series(|name, recs| {
        let data = climate_matrix(recs);
        let missing = data.iter().flatten().filter(|v| v.is_none()).count();
        if missing == 0 {
            log.push(ProvinceImputation {
                province: name.to_string(),
                missing: 0,
                iterations_run: 0,
                final_delta: 0.0,
            });
            return Ok(recs.to_vec());
        }
        let mut rng = Rng::new(derive_seed(seed, &format!("impute/{name}")));
        let res = missforest(&data, params, &mut rng)
            .map_err(|e| Error::Precondition(format!("imputing '{name}': {e}")))?;
        log.push(ProvinceImputation {
            province: name.to_string(),
            missing,
            iterations_run: res.iterations_run,
            final_delta: res.final_delta,
        });
        Ok(recs
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut r = r.clone();
                let fill = |j: usize, v: Option<f64>| v.or(Some(res.completed.get(i, j)));
                r.set_climate([
                    fill(0, r.temp_mean),
                    fill(1, r.rainfall),
                    fill(2, r.rel_humidity),
                ]);
                r
            })
            .collect())
    })?;
    Ok((out, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ImputeParams {
        ImputeParams {
            forest: ForestParams {
                n_trees: 20,
                ..Default::default()
            },
            max_iter: 5,
        }
    }

    #[test]
    fn nothing_missing_returns_input() {
        let data = vec![vec![Some(1.0), Some(2.0)], vec![Some(3.0), Some(4.0)]];
        let r = missforest(&data, &small(), &mut Rng::new(0)).unwrap();
        assert_eq!(r.iterations_run, 0);
        assert_eq!(r.completed.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn constant_column_imputes_constant() {
        let data = vec![
            vec![Some(5.0), Some(1.0)],
            vec![Some(5.0), Some(2.0)],
            vec![None, Some(3.0)],
            vec![Some(5.0), Some(4.0)],
        ];
        let r = missforest(&data, &small(), &mut Rng::new(0)).unwrap();
        assert_eq!(r.completed.get(2, 0), 5.0);
    }

    #[test]
    fn argument_errors() {
        let all_missing = vec![vec![None, Some(1.0)], vec![None, Some(2.0)]];
        assert!(matches!(
            missforest(&all_missing, &small(), &mut Rng::new(0)),
            Err(Error::Argument(_))
        ));
        let one_col = vec![vec![Some(1.0)], vec![None]];
        assert!(missforest(&one_col, &small(), &mut Rng::new(0)).is_err());
        let data = vec![vec![Some(1.0), None], vec![Some(2.0), Some(1.0)]];
        let zero_iter = ImputeParams {
            max_iter: 0,
            ..small()
        };
        assert!(matches!(
            missforest(&data, &zero_iter, &mut Rng::new(0)),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn change_statistic_is_zero_iff_unchanged() {
        let a = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut b = a.clone();
        let pos = [(0, 1), (1, 0)];
        assert_eq!(change_statistic(&a, &b, &pos), 0.0);
        b.set(0, 1, 2.5);
        let d = change_statistic(&a, &b, &pos);
        assert!(d > 0.0);
        assert!((d - 0.25 / (2.5 * 2.5 + 9.0)).abs() < 1e-15);
        // Changes outside the imputed positions do not count.
        let mut c = a.clone();
        c.set(0, 0, 100.0);
        assert_eq!(change_statistic(&a, &c, &pos), 0.0);
    }

    #[test]
    fn observed_entries_are_untouched_and_result_is_seeded() {
        let mut rng = Rng::new(8);
        let data: Vec<Vec<Option<f64>>> = (0..60)
            .map(|i| {
                let t = i as f64 / 6.0;
                let a = t.sin() * 3.0 + rng.normal(0.0, 0.1).unwrap();
                let b = t.sin() * 2.0 + 10.0;
                let keep = |v: f64, r: &mut Rng| if r.next_f64() < 0.15 { None } else { Some(v) };
                vec![keep(a, &mut rng), keep(b, &mut rng), Some(t.cos())]
            })
            .collect();
        let a = missforest(&data, &small(), &mut Rng::new(1)).unwrap();
        let b = missforest(&data, &small(), &mut Rng::new(1)).unwrap();
        assert_eq!(a, b);
        for (r, row) in data.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                let got = a.completed.get(r, c);
                assert!(got.is_finite());
                if let Some(v) = v {
                    assert_eq!(got.to_bits(), v.to_bits());
                }
            }
        }
        assert!(a.iterations_run >= 1 && a.iterations_run <= 5);
        assert!(a.final_delta >= 0.0);
    }
}
