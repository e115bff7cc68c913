//! Supervised (window → next month's cases) samples and the chronological
//! train/test split. Scalers are fitted on the training partition only.

use std::fmt;
use std::str::FromStr;

use crate::data::{MonthKey, MonthlyRecord};
use crate::error::{Error, Result};
use crate::math::{Matrix, MinMaxScaler};

pub const DEFAULT_LOOKBACK: usize = 12;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    /// Lagged cases only.
    Univariate,
    /// Temperature, rainfall, humidity, population and lagged cases.
    Multivariate,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Univariate, Variant::Multivariate];

    pub fn width(self) -> usize {
        match self {
            Variant::Univariate => 1,
            Variant::Multivariate => 5,
        }
    }

    /// Column of the lagged case count within a window row.
    pub fn cases_column(self) -> usize {
        self.width() - 1
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Univariate => "univariate",
            Variant::Multivariate => "multivariate",
        }
    }

    pub fn features(self, r: &MonthlyRecord) -> Result<Vec<f64>> {
        match self {
            Variant::Univariate => Ok(vec![r.cases as f64]),
            Variant::Multivariate => {
                let get = |v: Option<f64>, name: &str| {
                    v.ok_or_else(|| {
                        Error::Precondition(format!(
                            "{name} missing for '{}' in {}; impute first",
                            r.province, r.month
                        ))
                    })
                };
                Ok(vec![
                    get(r.temp_mean, "temp_mean")?,
                    get(r.rainfall, "rainfall")?,
                    get(r.rel_humidity, "rel_humidity")?,
                    r.population as f64,
                    r.cases as f64,
                ])
            }
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "univariate" => Ok(Variant::Univariate),
            "multivariate" => Ok(Variant::Multivariate),
            _ => Err(Error::Argument(format!(
                "unknown variant '{s}' (expected univariate or multivariate)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub lookback: usize,
    pub variant: Variant,
}

impl WindowSpec {
    pub fn new(lookback: usize, variant: Variant) -> Self {
        WindowSpec { lookback, variant }
    }
}

/// All windows of a series, unscaled, with scalers and a split index.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    spec: WindowSpec,
    inputs: Vec<Matrix>,
    targets: Vec<f64>,
    target_months: Vec<MonthKey>,
    input_scaler: MinMaxScaler,
    target_scaler: MinMaxScaler,
    split: usize,
}

/// Builds every `lookback`-month window of `series` with the following
/// month's cases as target. Until split, all samples count as training.
pub fn make_windows(series: &[MonthlyRecord], spec: WindowSpec) -> Result<WindowedDataset> {
    if spec.lookback == 0 {
        return Err(Error::Argument("lookback must be at least 1 month".into()));
    }
    if series.len() <= spec.lookback {
        return Err(Error::Argument(format!(
            "series of {} months is too short for lookback {}; need at least {}",
            series.len(),
            spec.lookback,
            spec.lookback + 1
        )));
    }
    let rows = series
        .iter()
        .map(|r| spec.variant.features(r))
        .collect::<Result<Vec<_>>>()?;
    let width = spec.variant.width();
    let n = series.len() - spec.lookback;
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    let mut target_months = Vec::with_capacity(n);
    for s in 0..n {
        let data = rows[s..s + spec.lookback].concat();
        inputs.push(Matrix::from_vec(spec.lookback, width, data)?);
        targets.push(series[s + spec.lookback].cases as f64);
        target_months.push(series[s + spec.lookback].month);
    }
    let (input_scaler, target_scaler) = fit_scalers(&inputs[..], &targets[..])?;
    Ok(WindowedDataset {
        spec,
        inputs,
        targets,
        target_months,
        input_scaler,
        target_scaler,
        split: n,
    })
}

fn fit_scalers(inputs: &[Matrix], targets: &[f64]) -> Result<(MinMaxScaler, MinMaxScaler)> {
    let rows: Vec<&[f64]> = inputs
        .iter()
        .flat_map(|m| (0..m.rows()).map(move |r| m.row(r)))
        .collect();
    let t: Vec<[f64; 1]> = targets.iter().map(|&v| [v]).collect();
    Ok((MinMaxScaler::fit(&rows)?, MinMaxScaler::fit(&t)?))
}

pub fn scale_window(scaler: &MinMaxScaler, window: &Matrix) -> Result<Matrix> {
    if window.cols() != scaler.width() {
        return Err(Error::Shape(format!(
            "window of width {} for scaler of width {}",
            window.cols(),
            scaler.width()
        )));
    }
    let mut out = window.clone();
    let w = window.cols();
    for (k, v) in out.data_mut().iter_mut().enumerate() {
        *v = scaler.transform_one(k % w, *v);
    }
    Ok(out)
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn spec(&self) -> WindowSpec {
        self.spec
    }

    pub fn inputs(&self) -> &[Matrix] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn target_months(&self) -> &[MonthKey] {
        &self.target_months
    }

    pub fn split(&self) -> usize {
        self.split
    }

    pub fn input_scaler(&self) -> &MinMaxScaler {
        &self.input_scaler
    }

    pub fn target_scaler(&self) -> &MinMaxScaler {
        &self.target_scaler
    }

    /// Samples `range`, scaled with the given scalers.
    pub fn partition(
        &self,
        range: std::ops::Range<usize>,
        input_scaler: &MinMaxScaler,
        target_scaler: &MinMaxScaler,
    ) -> Result<Partition> {
        if target_scaler.width() != 1 {
            return Err(Error::Shape("target scaler must have width 1".into()));
        }
        let raw_inputs = self.inputs[range.clone()].to_vec();
        let inputs = raw_inputs
            .iter()
            .map(|w| scale_window(input_scaler, w))
            .collect::<Result<Vec<_>>>()?;
        let raw_targets = self.targets[range.clone()].to_vec();
        Ok(Partition {
            spec: self.spec,
            targets: raw_targets
                .iter()
                .map(|&t| target_scaler.transform_one(0, t))
                .collect(),
            inputs,
            raw_inputs,
            raw_targets,
            months: self.target_months[range].to_vec(),
            input_scaler: input_scaler.clone(),
            target_scaler: target_scaler.clone(),
        })
    }
}

/// A contiguous, scaled slice of samples plus the raw values it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub spec: WindowSpec,
    pub inputs: Vec<Matrix>,
    pub targets: Vec<f64>,
    pub raw_inputs: Vec<Matrix>,
    pub raw_targets: Vec<f64>,
    /// Month of each target.
    pub months: Vec<MonthKey>,
    pub input_scaler: MinMaxScaler,
    pub target_scaler: MinMaxScaler,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Number of training samples for a fraction: ⌊fraction · samples⌋.
pub fn split_index(samples: usize, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Argument(format!(
            "train fraction {fraction} must lie strictly between 0 and 1"
        )));
    }
    // The nudge keeps products like 0.29 * 100 from flooring to 28.
    let split = (fraction * samples as f64 + 1e-9).floor() as usize;
    if split == 0 || split >= samples {
        return Err(Error::Argument(format!(
            "fraction {fraction} of {samples} samples leaves an empty partition"
        )));
    }
    Ok(split)
}

/// Chronological split; scalers are re-fitted on the training samples and
/// applied to both sides, so test values may fall outside [0, 1].
pub fn split_train_test(w: &WindowedDataset, fraction: f64) -> Result<(Partition, Partition)> {
    let split = split_index(w.len(), fraction)?;
    let (input_scaler, target_scaler) = fit_scalers(&w.inputs[..split], &w.targets[..split])?;
    let train = w.partition(0..split, &input_scaler, &target_scaler)?;
    let test = w.partition(split..w.len(), &input_scaler, &target_scaler)?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(cases: &[u64]) -> Vec<MonthlyRecord> {
        let start = MonthKey::new(2010, 1).unwrap();
        cases
            .iter()
            .enumerate()
            .map(|(i, &c)| MonthlyRecord {
                province: "Ngozi".into(),
                month: start.offset(i as i64),
                temp_mean: Some(20.0 + i as f64),
                rainfall: Some(100.0),
                rel_humidity: Some(60.0),
                population: 1000,
                cases: c,
            })
            .collect()
    }

    #[test]
    fn sample_count_is_length_minus_lookback() {
        let s = series(&[1; 14]);
        let w = make_windows(&s, WindowSpec::new(12, Variant::Univariate)).unwrap();
        assert_eq!(w.len(), 2);
    }

    #[test]
    fn univariate_window_contents() {
        let w = make_windows(&series(&[1, 2, 3]), WindowSpec::new(2, Variant::Univariate)).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w.inputs()[0].shape(), (2, 1));
        assert_eq!(w.inputs()[0].data(), &[1.0, 2.0]);
        assert_eq!(w.targets(), &[3.0]);
        assert_eq!(w.target_months()[0], MonthKey::new(2010, 3).unwrap());
    }

    #[test]
    fn multivariate_width_is_five() {
        let w = make_windows(&series(&[4; 6]), WindowSpec::new(3, Variant::Multivariate)).unwrap();
        assert_eq!(w.inputs()[0].cols(), 5);
        assert_eq!(w.inputs()[0].row(0), &[20.0, 100.0, 60.0, 1000.0, 4.0]);
    }

    #[test]
    fn too_short_series_names_minimum() {
        let err =
            make_windows(&series(&[1; 12]), WindowSpec::new(12, Variant::Univariate)).unwrap_err();
        assert!(err.to_string().contains("at least 13"), "{err}");
    }

    #[test]
    fn multivariate_needs_complete_climate() {
        let mut s = series(&[1; 5]);
        s[2].rainfall = None;
        assert!(matches!(
            make_windows(&s, WindowSpec::new(2, Variant::Multivariate)),
            Err(Error::Precondition(_))
        ));
        assert!(make_windows(&s, WindowSpec::new(2, Variant::Univariate)).is_ok());
    }

    #[test]
    fn eighty_percent_split() {
        let cases: Vec<u64> = (0..12).collect();
        let w = make_windows(&series(&cases), WindowSpec::new(2, Variant::Univariate)).unwrap();
        assert_eq!(w.len(), 10);
        let (train, test) = split_train_test(&w, 0.8).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        assert!(train.months.last() < test.months.first());

        let w5 = make_windows(
            &series(&cases[..7]),
            WindowSpec::new(2, Variant::Univariate),
        )
        .unwrap();
        let (train, test) = split_train_test(&w5, 0.8).unwrap();
        assert_eq!((train.len(), test.len()), (4, 1));
    }

    #[test]
    fn test_values_may_leave_unit_interval() {
        let cases: Vec<u64> = (0..12).map(|i| i * 10).collect();
        let w = make_windows(&series(&cases), WindowSpec::new(2, Variant::Univariate)).unwrap();
        let (train, test) = split_train_test(&w, 0.8).unwrap();
        assert!(train.targets.iter().all(|t| (0.0..=1.0).contains(t)));
        assert!(test.targets.iter().all(|&t| t > 1.0));
    }

    #[test]
    fn empty_partitions_are_rejected() {
        let w = make_windows(
            &series(&[1, 2, 3, 4]),
            WindowSpec::new(2, Variant::Univariate),
        )
        .unwrap();
        assert!(split_train_test(&w, 0.4).is_err());
        assert!(split_train_test(&w, 0.0).is_err());
        assert!(split_train_test(&w, 1.0).is_err());
        assert_eq!(split_index(100, 0.29).unwrap(), 29);
    }

    proptest! {
        #[test]
        fn windows_reconstruct_series(cases in proptest::collection::vec(0u64..10_000, 2..60), l in 1usize..12) {
            prop_assume!(cases.len() > l);
            let s = series(&cases);
            let w = make_windows(&s, WindowSpec::new(l, Variant::Univariate)).unwrap();
            prop_assert_eq!(w.len(), cases.len() - l);
            let mut rebuilt: Vec<f64> = w.inputs()[0].data().to_vec();
            rebuilt.extend_from_slice(w.targets());
            let expect: Vec<f64> = cases.iter().map(|&c| c as f64).collect();
            prop_assert_eq!(rebuilt, expect);
        }

        #[test]
        fn scalers_ignore_test_partition(cases in proptest::collection::vec(0u64..10_000, 15..60)) {
            let s = series(&cases);
            let w = make_windows(&s, WindowSpec::new(3, Variant::Univariate)).unwrap();
            let (train, _) = split_train_test(&w, 0.8).unwrap();
            let split = train.len();
            let train_only = &cases[..split + 3];
            let max_in = train_only[..split + 2].iter().copied().max().unwrap() as f64;
            let max_t = train_only[3..].iter().copied().max().unwrap() as f64;
            prop_assert_eq!(train.input_scaler.max()[0], max_in);
            prop_assert_eq!(train.target_scaler.max()[0], max_t);
        }
    }
}
