//! RMSE, persistence baseline, horizon totals and the report formats: the
//! six-row RMSE comparison table, totals lines and per-region curve files.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::data::{MonthKey, COUNTRY, NEW_PROVINCES};
use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::window::Variant;

pub fn rmse(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    if observed.len() != predicted.len() {
        return Err(Error::Argument(format!(
            "rmse of series with lengths {} and {}",
            observed.len(),
            predicted.len()
        )));
    }
    if observed.is_empty() {
        return Err(Error::Argument("rmse of empty series".into()));
    }
    let mse = observed
        .iter()
        .zip(predicted)
        .map(|(o, p)| (o - p) * (o - p))
        .sum::<f64>()
        / observed.len() as f64;
    Ok(mse.sqrt())
}

/// Repeats the last observed case value of each (unscaled) window.
pub fn persistence_baseline(windows: &[Matrix], variant: Variant) -> Result<Vec<f64>> {
    let col = variant.cases_column();
    windows
        .iter()
        .map(|w| {
            if w.cols() != variant.width() || w.rows() == 0 {
                return Err(Error::Shape(format!(
                    "{variant} baseline given a {}x{} window",
                    w.rows(),
                    w.cols()
                )));
            }
            Ok(w.get(w.rows() - 1, col))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Univariate,
    Multivariate,
    Baseline,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Univariate => "univariate",
            ModelKind::Multivariate => "multivariate",
            ModelKind::Baseline => "baseline",
        }
    }
}

impl From<Variant> for ModelKind {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Univariate => ModelKind::Univariate,
            Variant::Multivariate => ModelKind::Multivariate,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "univariate" => Ok(ModelKind::Univariate),
            "multivariate" => Ok(ModelKind::Multivariate),
            "baseline" => Ok(ModelKind::Baseline),
            _ => Err(Error::Argument(format!("unknown model kind '{s}'"))),
        }
    }
}

/// Predicted against observed cases for one region and model over the test
/// horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastReport {
    pub region: String,
    pub kind: ModelKind,
    pub months: Vec<MonthKey>,
    pub observed: Vec<f64>,
    pub predicted: Vec<f64>,
    pub rmse: f64,
    pub observed_total: f64,
    pub predicted_total: f64,
}

impl ForecastReport {
    pub fn new(
        region: impl Into<String>,
        kind: ModelKind,
        months: Vec<MonthKey>,
        observed: Vec<f64>,
        predicted: Vec<f64>,
    ) -> Result<Self> {
        if months.len() != observed.len() {
            return Err(Error::Argument(format!(
                "{} months for {} observations",
                months.len(),
                observed.len()
            )));
        }
        let rmse = rmse(&observed, &predicted)?;
        Ok(ForecastReport {
            region: region.into(),
            kind,
            observed_total: observed.iter().sum(),
            predicted_total: predicted.iter().sum(),
            months,
            observed,
            predicted,
            rmse,
        })
    }
}

/// `(observed_total, predicted_total)` over the report's horizon.
pub fn horizon_totals(r: &ForecastReport) -> (f64, f64) {
    (r.observed_total, r.predicted_total)
}

/// Display name of a region in reports.
pub fn region_label(region: &str) -> String {
    if region == COUNTRY {
        format!("Country level: {COUNTRY}")
    } else {
        region.to_string()
    }
}

/// One line comparing horizon totals, e.g.
/// `Gitega | univariate | observed 1200500.00 | predicted 1230000.25 | difference +29500.25`.
pub fn totals_line(r: &ForecastReport) -> String {
    let (obs, pred) = horizon_totals(r);
    format!(
        "{} | {} | observed {:.2} | predicted {:.2} | difference {:+.2}",
        region_label(&r.region),
        r.kind,
        obs,
        pred,
        pred - obs
    )
}

/// Regions in report order: the five new provinces, then the country.
pub fn report_regions() -> Vec<&'static str> {
    NEW_PROVINCES.iter().copied().chain([COUNTRY]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub region: String,
    pub univariate: f64,
    pub multivariate: f64,
}

/// RMSE of the univariate and multivariate models for the five provinces and
/// the country.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

pub fn build_comparison(reports: &[ForecastReport]) -> Result<ComparisonTable> {
    let find = |region: &str, kind: ModelKind| {
        reports
            .iter()
            .find(|r| r.region == region && r.kind == kind)
            .map(|r| r.rmse)
            .ok_or_else(|| {
                Error::Completeness(format!("no {kind} forecast for {}", region_label(region)))
            })
    };
    let rows = report_regions()
        .into_iter()
        .map(|region| {
            Ok(ComparisonRow {
                region: region.to_string(),
                univariate: find(region, ModelKind::Univariate)?,
                multivariate: find(region, ModelKind::Multivariate)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonTable { rows })
}

const COL_REGION: usize = 24;
const COL_NUM: usize = 17;

impl ComparisonTable {
    /// Aligned plain text: header, the five provinces, a rule, the country.
    pub fn render_text(&self) -> String {
        let rule = format!(
            "{}+{}+{}\n",
            "-".repeat(COL_REGION + 1),
            "-".repeat(COL_NUM + 2),
            "-".repeat(COL_NUM + 1)
        );
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<COL_REGION$} | {:>COL_NUM$} | {:>COL_NUM$}",
            "Province", "Univariate LSTM", "Multivariate LSTM"
        );
        s.push_str(&rule);
        for (i, r) in self.rows.iter().enumerate() {
            if i == self.rows.len() - 1 {
                s.push_str(&rule);
            }
            let _ = writeln!(
                s,
                "{:<COL_REGION$} | {:>COL_NUM$.2} | {:>COL_NUM$.2}",
                region_label(&r.region),
                r.univariate,
                r.multivariate
            );
        }
        s
    }

    pub fn render_csv(&self) -> String {
        let mut s = String::from("region,univariate_rmse,multivariate_rmse\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:.2},{:.2}",
                region_label(&r.region),
                r.univariate,
                r.multivariate
            );
        }
        s
    }
}

/// Curve data: `month,observed,predicted` with round-trip float formatting.
pub fn curve_csv(r: &ForecastReport) -> String {
    let mut s = String::from("month,observed,predicted\n");
    for ((m, o), p) in r.months.iter().zip(&r.observed).zip(&r.predicted) {
        let _ = writeln!(s, "{m},{o},{p}");
    }
    s
}

/// Parses [`curve_csv`] output back into `(months, observed, predicted)`.
pub fn parse_curve_csv(text: &str) -> Result<(Vec<MonthKey>, Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    if rdr.headers()?.iter().collect::<Vec<_>>() != ["month", "observed", "predicted"] {
        return Err(Error::Row {
            row: 1,
            message: "curve header must be 'month,observed,predicted'".into(),
        });
    }
    let (mut months, mut obs, mut pred) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| {
            rec[i].parse::<f64>().map_err(|_| Error::Row {
                row,
                message: format!("'{}' is not a number", &rec[i]),
            })
        };
        months.push(rec[0].parse()?);
        obs.push(num(1)?);
        pred.push(num(2)?);
    }
    Ok((months, obs, pred))
}

/// Static SVG with the observed and predicted series as two polylines.
pub fn curve_svg(r: &ForecastReport) -> String {
    const W: f64 = 640.0;
    const H: f64 = 360.0;
    const PAD: f64 = 40.0;
    let n = r.observed.len();
    let top = r
        .observed
        .iter()
        .chain(&r.predicted)
        .fold(0.0f64, |a, &b| a.max(b))
        .max(1.0);
    let x = |i: usize| {
        if n <= 1 {
            PAD
        } else {
            PAD + (W - 2.0 * PAD) * i as f64 / (n - 1) as f64
        }
    };
    let y = |v: f64| H - PAD - (H - 2.0 * PAD) * v / top;
    let points = |vals: &[f64]| {
        vals.iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.2},{:.2}", x(i), y(v)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(
        s,
        r#"<title>{} ({}): observed vs predicted malaria cases</title>"#,
        region_label(&r.region),
        r.kind
    );
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#,
        H - PAD,
        W - PAD
    );
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{}" stroke="black"/>"#,
        H - PAD
    );
    let _ = writeln!(
        s,
        r#"<polyline id="observed" fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#,
        points(&r.observed)
    );
    let _ = writeln!(
        s,
        r#"<polyline id="predicted" fill="none" stroke="darkorange" stroke-width="2" stroke-dasharray="6 3" points="{}"/>"#,
        points(&r.predicted)
    );
    if let (Some(first), Some(last)) = (r.months.first(), r.months.last()) {
        let _ = writeln!(
            s,
            r#"<text x="{PAD}" y="{}" font-size="12">{first}</text>"#,
            H - PAD / 3.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="end">{last}</text>"#,
            W - PAD,
            H - PAD / 3.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{PAD}" y="{}" font-size="12">max {top:.0}</text>"#,
        PAD - 8.0
    );
    s.push_str("</svg>\n");
    s
}
