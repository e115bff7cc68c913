//! Monthly province records, CSV ingest/emit, annual population expansion and
//! the 18 → 5 province regrouping (climate averaged, population and cases
//! summed).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// The 18 provinces of the former administrative scheme.
pub const OLD_PROVINCES: [&str; 18] = [
    "Bubanza",
    "Bujumbura Mairie",
    "Bujumbura Rural",
    "Bururi",
    "Cankuzo",
    "Cibitoke",
    "Gitega",
    "Karuzi",
    "Kayanza",
    "Kirundo",
    "Makamba",
    "Muramvya",
    "Muyinga",
    "Mwaro",
    "Ngozi",
    "Rumonge",
    "Rutana",
    "Ruyigi",
];

/// The five provinces of the new scheme, in report order.
pub const NEW_PROVINCES: [&str; 5] = ["Bujumbura", "Gitega", "Burunga", "Butanyerera", "Buhumuza"];

/// Name of the single series in a country-level dataset.
pub const COUNTRY: &str = "Burundi";

const REGROUPING: [(&str, &[&str]); 5] = [
    (
        "Bujumbura",
        &["Bujumbura Mairie", "Bujumbura Rural", "Bubanza", "Cibitoke"],
    ),
    ("Gitega", &["Gitega", "Mwaro", "Karuzi", "Muramvya"]),
    ("Buhumuza", &["Cankuzo", "Muyinga", "Ruyigi"]),
    ("Butanyerera", &["Kirundo", "Ngozi", "Kayanza"]),
    ("Burunga", &["Bururi", "Makamba", "Rumonge", "Rutana"]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MonthKey {
    year: i32,
    month: u8,
}

impl MonthKey {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Argument(format!("month {month} is not in 1..=12")));
        }
        Ok(MonthKey {
            year,
            month: month as u8,
        })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u32 {
        u32::from(self.month)
    }

    /// Months since year 0, used for gap detection.
    pub fn ordinal(self) -> i64 {
        i64::from(self.year) * 12 + i64::from(self.month) - 1
    }

    pub fn from_ordinal(ord: i64) -> Self {
        MonthKey {
            year: ord.div_euclid(12) as i32,
            month: (ord.rem_euclid(12) + 1) as u8,
        }
    }

    pub fn offset(self, months: i64) -> Self {
        MonthKey::from_ordinal(self.ordinal() + months)
    }

    pub fn next(self) -> Self {
        self.offset(1)
    }

    /// Inclusive range of consecutive months.
    pub fn range(start: MonthKey, end: MonthKey) -> impl Iterator<Item = MonthKey> {
        (start.ordinal()..=end.ordinal()).map(MonthKey::from_ordinal)
    }
}

impl fmt::Display for MonthKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for MonthKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Argument(format!("'{s}' is not a YYYY-MM month"));
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        let year = y.parse().map_err(|_| bad())?;
        let month = m.parse().map_err(|_| bad())?;
        MonthKey::new(year, month)
    }
}

/// One province-month observation. Only the three climate fields may be
/// missing.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthlyRecord {
    pub province: String,
    pub month: MonthKey,
    /// Mean temperature, °C.
    pub temp_mean: Option<f64>,
    /// Rainfall, mm.
    pub rainfall: Option<f64>,
    /// Relative humidity, %.
    pub rel_humidity: Option<f64>,
    pub population: u64,
    pub cases: u64,
}

impl MonthlyRecord {
    pub fn climate(&self) -> [Option<f64>; 3] {
        [self.temp_mean, self.rainfall, self.rel_humidity]
    }

    pub fn set_climate(&mut self, values: [Option<f64>; 3]) {
        self.temp_mean = values[0];
        self.rainfall = values[1];
        self.rel_humidity = values[2];
    }

    pub fn has_missing_climate(&self) -> bool {
        self.climate().iter().any(Option::is_none)
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.population == 0 {
            return Err("population must be positive".into());
        }
        for (name, v) in CLIMATE_COLUMNS.iter().zip(self.climate()) {
            if let Some(v) = v {
                if !v.is_finite() {
                    return Err(format!("{name} is not finite"));
                }
            }
        }
        if let Some(h) = self.rel_humidity {
            if !(0.0..=100.0).contains(&h) {
                return Err(format!("rel_humidity {h} outside [0, 100]"));
            }
        }
        Ok(())
    }
}

const CLIMATE_COLUMNS: [&str; 3] = ["temp_mean", "rainfall", "rel_humidity"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Old,
    New,
    Country,
}

impl Scheme {
    pub fn canonical_provinces(self) -> &'static [&'static str] {
        match self {
            Scheme::Old => &OLD_PROVINCES,
            Scheme::New => &NEW_PROVINCES,
            Scheme::Country => &[COUNTRY],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Old => "old",
            Scheme::New => "new",
            Scheme::Country => "country",
        }
    }

    /// Guesses the scheme from the province names present. Returns `None`
    /// when some name belongs to no scheme.
    pub fn detect<'a>(names: impl IntoIterator<Item = &'a str>) -> Option<Scheme> {
        let names: BTreeSet<&str> = names.into_iter().collect();
        let within = |s: Scheme| names.iter().all(|n| s.canonical_provinces().contains(n));
        if within(Scheme::Country) {
            Some(Scheme::Country)
        } else if within(Scheme::Old) {
            // "Gitega" exists in both schemes; a file naming only it reads as old.
            Some(Scheme::Old)
        } else if within(Scheme::New) {
            Some(Scheme::New)
        } else {
            None
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "old" => Ok(Scheme::Old),
            "new" => Ok(Scheme::New),
            "country" => Ok(Scheme::Country),
            _ => Err(Error::Argument(format!(
                "unknown scheme '{s}' (expected old, new or country)"
            ))),
        }
    }
}

/// Chronologically sorted, gap-free series keyed by province, all on the same
/// month range.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    scheme: Scheme,
    series: BTreeMap<String, Vec<MonthlyRecord>>,
}

impl Dataset {
    pub fn from_records(scheme: Scheme, records: Vec<MonthlyRecord>) -> Result<Self> {
        let mut series: BTreeMap<String, Vec<MonthlyRecord>> = BTreeMap::new();
        for r in records {
            r.check()
                .map_err(|m| Error::Precondition(format!("{} {}: {m}", r.province, r.month)))?;
            series.entry(r.province.clone()).or_default().push(r);
        }
        if series.is_empty() {
            return Err(Error::Argument("dataset has no records".into()));
        }
        let mut range: Option<(String, MonthKey, MonthKey)> = None;
        for (name, recs) in series.iter_mut() {
            recs.sort_by_key(|r| r.month);
            for pair in recs.windows(2) {
                let (a, b) = (pair[0].month, pair[1].month);
                if a == b {
                    return Err(Error::Coverage(format!(
                        "province '{name}' has two records for {a}"
                    )));
                }
                if b.ordinal() != a.ordinal() + 1 {
                    return Err(Error::Gap {
                        province: name.clone(),
                        before: a.to_string(),
                        after: b.to_string(),
                    });
                }
            }
            let (first, last) = (recs[0].month, recs[recs.len() - 1].month);
            match &range {
                None => range = Some((name.clone(), first, last)),
                Some((other, f, l)) if (*f, *l) != (first, last) => {
                    return Err(Error::Coverage(format!(
                        "province '{name}' covers {first}..{last} but '{other}' covers {f}..{l}"
                    )));
                }
                Some(_) => {}
            }
        }
        Ok(Dataset { scheme, series })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn provinces(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(String::as_str)
    }

    pub fn series(&self, province: &str) -> Option<&[MonthlyRecord]> {
        self.series.get(province).map(Vec::as_slice)
    }

    pub fn iter_series(&self) -> impl Iterator<Item = (&str, &[MonthlyRecord])> {
        self.series.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// All records, province by province.
    pub fn records(&self) -> impl Iterator<Item = &MonthlyRecord> {
        self.series.values().flatten()
    }

    pub fn months(&self) -> Vec<MonthKey> {
        self.series
            .values()
            .next()
            .map(|v| v.iter().map(|r| r.month).collect())
            .unwrap_or_default()
    }

    pub fn month_count(&self) -> usize {
        self.series.values().next().map_or(0, Vec::len)
    }

    pub fn missing_climate_count(&self) -> usize {
        self.records()
            .map(|r| r.climate().iter().filter(|v| v.is_none()).count())
            .sum()
    }

    /// Rebuilds the dataset with one province's records replaced through `f`.
    /// `f` may only touch the climate fields.
    pub(crate) fn map_series<F>(&self, mut f: F) -> Result<Dataset>
    where
        F: FnMut(&str, &[MonthlyRecord]) -> Result<Vec<MonthlyRecord>>,
    {
        let mut out = Vec::new();
        for (name, recs) in &self.series {
            out.extend(f(name, recs)?);
        }
        Dataset::from_records(self.scheme, out)
    }
}

/// How to validate province names on ingest.
#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// Expected scheme; detected from the names when absent.
    pub scheme: Option<Scheme>,
    /// Explicit list of valid names, overriding the scheme's canonical list
    /// (used with user-supplied redistricting maps).
    pub provinces: Option<BTreeSet<String>>,
}

struct Columns {
    province: usize,
    year: usize,
    month: usize,
    temp: TempColumns,
    rainfall: usize,
    rel_humidity: usize,
    population: usize,
    cases: usize,
}

enum TempColumns {
    Mean(usize),
    MinMax(usize, usize),
}

impl Columns {
    fn locate(headers: &csv::StringRecord) -> Result<Self> {
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let need = |name: &str| {
            find(name).ok_or_else(|| Error::Row {
                row: 1,
                message: format!("header lacks column '{name}'"),
            })
        };
        let temp = match (find("temp_mean"), find("temp_min"), find("temp_max")) {
            (Some(i), _, _) => TempColumns::Mean(i),
            (None, Some(lo), Some(hi)) => TempColumns::MinMax(lo, hi),
            _ => {
                return Err(Error::Row {
                    row: 1,
                    message: "header needs temp_mean or both temp_min and temp_max".into(),
                })
            }
        };
        Ok(Columns {
            province: need("province")?,
            year: need("year")?,
            month: need("month")?,
            temp,
            rainfall: need("rainfall")?,
            rel_humidity: need("rel_humidity")?,
            population: need("population")?,
            cases: need("cases")?,
        })
    }
}

fn cell(rec: &csv::StringRecord, idx: usize, row: u64) -> Result<&str> {
    rec.get(idx).map(str::trim).ok_or_else(|| Error::Row {
        row,
        message: format!("missing field {}", idx + 1),
    })
}

fn parse_opt_f64(s: &str, name: &str, row: u64) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    let v: f64 = s.parse().map_err(|_| Error::Row {
        row,
        message: format!("{name} '{s}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Row {
            row,
            message: format!("{name} '{s}' is not finite"),
        });
    }
    Ok(Some(v))
}

fn parse_count(s: &str, name: &str, row: u64) -> Result<i64> {
    s.parse().map_err(|_| Error::Row {
        row,
        message: format!("{name} '{s}' is not an integer"),
    })
}

/// Parses the canonical province CSV. Rows may appear in any order; the
/// result is sorted and gap-checked.
pub fn ingest_csv<R: Read>(reader: R, opts: &IngestOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let cols = Columns::locate(rdr.headers()?)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line());
        let province = cell(&rec, cols.province, row)?.to_string();
        let year = parse_count(cell(&rec, cols.year, row)?, "year", row)?;
        let month = parse_count(cell(&rec, cols.month, row)?, "month", row)?;
        let month = i32::try_from(year)
            .ok()
            .zip(u32::try_from(month).ok())
            .and_then(|(y, m)| MonthKey::new(y, m).ok())
            .ok_or_else(|| Error::Row {
                row,
                message: format!("invalid year/month {year}/{month}"),
            })?;
        let temp_mean = match cols.temp {
            TempColumns::Mean(i) => parse_opt_f64(cell(&rec, i, row)?, "temp_mean", row)?,
            TempColumns::MinMax(lo, hi) => {
                let lo = parse_opt_f64(cell(&rec, lo, row)?, "temp_min", row)?;
                let hi = parse_opt_f64(cell(&rec, hi, row)?, "temp_max", row)?;
                lo.zip(hi).map(|(a, b)| (a + b) / 2.0)
            }
        };
        let rainfall = parse_opt_f64(cell(&rec, cols.rainfall, row)?, "rainfall", row)?;
        let rel_humidity = parse_opt_f64(cell(&rec, cols.rel_humidity, row)?, "rel_humidity", row)?;
        if let Some(h) = rel_humidity {
            if !(0.0..=100.0).contains(&h) {
                return Err(Error::Row {
                    row,
                    message: format!("rel_humidity {h} outside [0, 100]"),
                });
            }
        }
        let population = parse_count(cell(&rec, cols.population, row)?, "population", row)?;
        if population <= 0 {
            return Err(Error::Row {
                row,
                message: format!("population {population} must be positive"),
            });
        }
        let cases = parse_count(cell(&rec, cols.cases, row)?, "cases", row)?;
        if cases < 0 {
            return Err(Error::Row {
                row,
                message: format!("negative cases {cases}"),
            });
        }
        rows.push((
            row,
            MonthlyRecord {
                province,
                month,
                temp_mean,
                rainfall,
                rel_humidity,
                population: population as u64,
                cases: cases as u64,
            },
        ));
    }

    let scheme = match (&opts.provinces, opts.scheme) {
        (Some(_), s) => s.unwrap_or(Scheme::Old),
        (None, Some(s)) => s,
        (None, None) => {
            Scheme::detect(rows.iter().map(|(_, r)| r.province.as_str())).unwrap_or(Scheme::Old)
        }
    };
    for (row, r) in &rows {
        let known = match &opts.provinces {
            Some(set) => set.contains(&r.province),
            None => scheme.canonical_provinces().contains(&r.province.as_str()),
        };
        if !known {
            return Err(Error::UnknownProvince {
                name: r.province.clone(),
                row: *row,
            });
        }
    }
    Dataset::from_records(scheme, rows.into_iter().map(|(_, r)| r).collect())
}

pub fn read_dataset(path: &Path, opts: &IngestOptions) -> Result<Dataset> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_csv(std::io::BufReader::new(f), opts)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the canonical CSV. Floats use the shortest representation that
/// parses back to the same bits.
pub fn write_csv<W: Write>(d: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "province",
        "year",
        "month",
        "temp_mean",
        "rainfall",
        "rel_humidity",
        "population",
        "cases",
    ])?;
    for r in d.records() {
        w.write_record([
            r.province.clone(),
            r.month.year().to_string(),
            r.month.month().to_string(),
            fmt_opt(r.temp_mean),
            fmt_opt(r.rainfall),
            fmt_opt(r.rel_humidity),
            r.population.to_string(),
            r.cases.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn to_csv_bytes(d: &Dataset) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_csv(d, &mut buf)?;
    Ok(buf)
}

/// Spreads annual population figures over every month of `start..=end`; each
/// month carries its year's value unchanged.
pub fn expand_population(
    annual: &BTreeMap<(String, i32), u64>,
    start: MonthKey,
    end: MonthKey,
) -> Result<BTreeMap<String, Vec<u64>>> {
    if end < start {
        return Err(Error::Argument(format!("empty month range {start}..{end}")));
    }
    let provinces: BTreeSet<&String> = annual.keys().map(|(p, _)| p).collect();
    let mut out = BTreeMap::new();
    for p in provinces {
        let col = MonthKey::range(start, end)
            .map(|m| {
                annual.get(&(p.clone(), m.year())).copied().ok_or_else(|| {
                    Error::Coverage(format!("no population for '{p}' in {}", m.year()))
                })
            })
            .collect::<Result<Vec<u64>>>()?;
        out.insert(p.clone(), col);
    }
    Ok(out)
}

/// Assignment of each old province to exactly one new province.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RedistrictingMap {
    old_to_new: BTreeMap<String, String>,
}

impl RedistrictingMap {
    pub fn new<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        let mut old_to_new = BTreeMap::new();
        for (old, new) in pairs {
            let (old, new) = (old.into(), new.into());
            if old.is_empty() || new.is_empty() {
                return Err(Error::Map("empty province name".into()));
            }
            if let Some(prev) = old_to_new.insert(old.clone(), new.clone()) {
                if prev != new {
                    return Err(Error::Map(format!(
                        "'{old}' assigned to both '{prev}' and '{new}'"
                    )));
                }
            }
        }
        if old_to_new.is_empty() {
            return Err(Error::Map("map is empty".into()));
        }
        Ok(RedistrictingMap { old_to_new })
    }

    /// The built-in 18 → 5 regrouping.
    pub fn burundi() -> Self {
        let pairs = REGROUPING
            .iter()
            .flat_map(|(new, olds)| olds.iter().map(move |old| (*old, *new)));
        RedistrictingMap::new(pairs).expect("built-in map is valid")
    }

    /// Reads a two-column `old_province,new_province` CSV.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let h = rdr.headers()?.clone();
        if h.len() != 2 || &h[0] != "old_province" || &h[1] != "new_province" {
            return Err(Error::Map(
                "header must be 'old_province,new_province'".into(),
            ));
        }
        let mut pairs = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            pairs.push((rec[0].to_string(), rec[1].to_string()));
        }
        RedistrictingMap::new(pairs)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        RedistrictingMap::from_csv(std::io::BufReader::new(f))
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["old_province", "new_province"])?;
        for (o, n) in &self.old_to_new {
            w.write_record([o, n])?;
        }
        w.into_inner()
            .map_err(|e| Error::io("<csv writer>", e.into_error()))
    }

    pub fn target(&self, old: &str) -> Option<&str> {
        self.old_to_new.get(old).map(String::as_str)
    }

    pub fn old_provinces(&self) -> impl Iterator<Item = &str> {
        self.old_to_new.keys().map(String::as_str)
    }

    /// New province → sorted member list.
    pub fn groups(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut g: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (o, n) in &self.old_to_new {
            g.entry(n.as_str()).or_default().push(o.as_str());
        }
        g
    }
}

/// Combines aligned member series month by month: climate is the arithmetic
/// mean, population and cases are summed.
fn combine(name: &str, members: &[&[MonthlyRecord]]) -> Result<Vec<MonthlyRecord>> {
    let n = members[0].len();
    let count = members.len() as f64;
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let month = members[0][t].month;
        let mut climate = [0.0f64; 3];
        let mut population = 0u64;
        let mut cases = 0u64;
        for m in members {
            let r = &m[t];
            debug_assert_eq!(r.month, month);
            for (acc, (v, col)) in climate
                .iter_mut()
                .zip(r.climate().into_iter().zip(CLIMATE_COLUMNS))
            {
                *acc += v.ok_or_else(|| {
                    Error::Precondition(format!(
                        "{col} missing for '{}' in {month}; impute before aggregating",
                        r.province
                    ))
                })?;
            }
            population = population
                .checked_add(r.population)
                .ok_or_else(|| Error::Argument("population sum overflows".into()))?;
            cases = cases
                .checked_add(r.cases)
                .ok_or_else(|| Error::Argument("case sum overflows".into()))?;
        }
        out.push(MonthlyRecord {
            province: name.to_string(),
            month,
            temp_mean: Some(climate[0] / count),
            rainfall: Some(climate[1] / count),
            rel_humidity: Some(climate[2] / count),
            population,
            cases,
        });
    }
    Ok(out)
}

/// Regroups an old-scheme dataset into the new provinces of `map`.
pub fn aggregate_provinces(d: &Dataset, map: &RedistrictingMap) -> Result<Dataset> {
    if d.scheme() != Scheme::Old {
        return Err(Error::Precondition(format!(
            "aggregation expects an old-scheme dataset, got {}",
            d.scheme().as_str()
        )));
    }
    for p in d.provinces() {
        if map.target(p).is_none() {
            return Err(Error::Map(format!("province '{p}' is not in the map")));
        }
    }
    let mut out = Vec::new();
    for (new, members) in map.groups() {
        let series = members
            .iter()
            .map(|m| {
                d.series(m).ok_or_else(|| {
                    Error::Coverage(format!("dataset lacks old province '{m}' (for '{new}')"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.extend(combine(new, &series)?);
    }
    Dataset::from_records(Scheme::New, out)
}

/// Collapses a new-scheme dataset into the single country series.
pub fn to_country_level(d: &Dataset) -> Result<Dataset> {
    if d.scheme() != Scheme::New {
        return Err(Error::Precondition(format!(
            "country aggregation expects a new-scheme dataset, got {}",
            d.scheme().as_str()
        )));
    }
    let series: Vec<&[MonthlyRecord]> = d.iter_series().map(|(_, s)| s).collect();
    Dataset::from_records(Scheme::Country, combine(COUNTRY, &series)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(p: &str, y: i32, m: u32, temp: f64, cases: u64) -> MonthlyRecord {
        MonthlyRecord {
            province: p.into(),
            month: MonthKey::new(y, m).unwrap(),
            temp_mean: Some(temp),
            rainfall: Some(100.0),
            rel_humidity: Some(70.0),
            population: 1000,
            cases,
        }
    }

    const HEADER: &str = "province,year,month,temp_mean,rainfall,rel_humidity,population,cases\n";

    #[test]
    fn month_key_order_and_display() {
        let a = MonthKey::new(2010, 12).unwrap();
        let b = a.next();
        assert_eq!(b, MonthKey::new(2011, 1).unwrap());
        assert!(a < b);
        assert_eq!(a.to_string(), "2010-12");
        assert_eq!("2011-01".parse::<MonthKey>().unwrap(), b);
        assert!(MonthKey::new(2010, 13).is_err());
        assert_eq!(MonthKey::range(a, b.offset(1)).count(), 3);
    }

    #[test]
    fn ingest_two_provinces_three_months() {
        let mut s = String::from(HEADER);
        for p in ["Ngozi", "Kirundo"] {
            for m in 1..=3 {
                s += &format!("{p},2010,{m},20.5,110,71,5000,{}\n", m * 10);
            }
        }
        let d = ingest_csv(s.as_bytes(), &IngestOptions::default()).unwrap();
        assert_eq!(d.scheme(), Scheme::Old);
        assert_eq!(d.records().count(), 6);
        assert_eq!(d.series("Ngozi").unwrap()[2].cases, 30);
    }

    #[test]
    fn ingest_reports_gap_with_province() {
        let s = format!("{HEADER}Ngozi,2010,1,20,1,50,10,1\nNgozi,2010,3,20,1,50,10,1\n");
        match ingest_csv(s.as_bytes(), &IngestOptions::default()) {
            Err(Error::Gap {
                province,
                before,
                after,
            }) => {
                assert_eq!(province, "Ngozi");
                assert_eq!(before, "2010-01");
                assert_eq!(after, "2010-03");
            }
            other => panic!("expected gap error, got {other:?}"),
        }
    }

    #[test]
    fn empty_rainfall_is_missing() {
        let s = format!("{HEADER}Ngozi,2010,1,20,,50,10,1\n");
        let d = ingest_csv(s.as_bytes(), &IngestOptions::default()).unwrap();
        let r = &d.series("Ngozi").unwrap()[0];
        assert_eq!(r.rainfall, None);
        assert_eq!(r.temp_mean, Some(20.0));
    }

    #[test]
    fn ingest_row_errors_carry_row_number() {
        let cases = [
            ("Atlantis,2010,1,20,1,50,10,1\n", "unknown"),
            ("Ngozi,2010,1,20,1,50,10,-3\n", "negative"),
            ("Ngozi,2010,1,20,1,50,0,3\n", "population"),
            ("Ngozi,2010,1,abc,1,50,10,3\n", "temp_mean"),
            ("Ngozi,2010,1,20,1,150,10,3\n", "rel_humidity"),
        ];
        for (line, needle) in cases {
            let s = format!("{HEADER}Ngozi,2009,12,20,1,50,10,1\n{line}");
            let err = ingest_csv(s.as_bytes(), &IngestOptions::default()).unwrap_err();
            let msg = err.to_string();
            assert!(msg.contains("row 3"), "{msg}");
            assert!(msg.contains(needle), "{msg}");
        }
    }

    #[test]
    fn ingest_min_max_temperature_is_averaged() {
        let s = "province,year,month,temp_min,temp_max,rainfall,rel_humidity,population,cases\n\
                 Ngozi,2010,1,14,26,80,60,10,1\nNgozi,2010,2,,26,80,60,10,1\n";
        let d = ingest_csv(s.as_bytes(), &IngestOptions::default()).unwrap();
        let recs = d.series("Ngozi").unwrap();
        assert_eq!(recs[0].temp_mean, Some(20.0));
        assert_eq!(recs[1].temp_mean, None);
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let mut r = rec("Gitega", 2010, 1, 0.1 + 0.2, 5);
        r.rainfall = None;
        let d = Dataset::from_records(Scheme::Old, vec![r, rec("Gitega", 2010, 2, 1.0 / 3.0, 7)])
            .unwrap();
        let bytes = to_csv_bytes(&d).unwrap();
        let back = ingest_csv(bytes.as_slice(), &IngestOptions::default()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn population_constant_within_year() {
        let mut annual = BTreeMap::new();
        annual.insert(("A".to_string(), 2010), 100);
        annual.insert(("A".to_string(), 2011), 110);
        let start = MonthKey::new(2010, 1).unwrap();
        let cols = expand_population(&annual, start, MonthKey::new(2011, 1).unwrap()).unwrap();
        let a = &cols["A"];
        assert_eq!(a.len(), 13);
        assert!(a[..12].iter().all(|&p| p == 100));
        assert_eq!(a[11], 100);
        assert_eq!(a[12], 110);
        let single = expand_population(&annual, start, start).unwrap();
        assert_eq!(single["A"], vec![100]);
        let err = expand_population(&annual, start, MonthKey::new(2012, 1).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Coverage(_)));
    }

    #[test]
    fn builtin_map_matches_regrouping() {
        let m = RedistrictingMap::burundi();
        assert_eq!(m.old_provinces().count(), 18);
        let sizes: BTreeMap<&str, usize> = m.groups().iter().map(|(k, v)| (*k, v.len())).collect();
        assert_eq!(sizes["Bujumbura"], 4);
        assert_eq!(sizes["Gitega"], 4);
        assert_eq!(sizes["Buhumuza"], 3);
        assert_eq!(sizes["Butanyerera"], 3);
        assert_eq!(sizes["Burunga"], 4);
        for p in OLD_PROVINCES {
            assert!(m.target(p).is_some(), "{p}");
        }
        let back = RedistrictingMap::from_csv(m.to_csv_bytes().unwrap().as_slice()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn map_rejects_conflicting_assignment() {
        assert!(RedistrictingMap::new([("a", "X"), ("a", "Y")]).is_err());
        assert!(RedistrictingMap::new(Vec::<(String, String)>::new()).is_err());
    }

    #[test]
    fn aggregation_sums_cases_and_averages_temperature() {
        let names = ["a", "b", "c", "d"];
        let temps = [20.0, 22.0, 24.0, 26.0];
        let records = names
            .iter()
            .zip(temps)
            .enumerate()
            .map(|(i, (n, t))| rec(n, 2010, 1, t, (i as u64 + 1) * 10))
            .collect();
        let d = Dataset::from_records(Scheme::Old, records).unwrap();
        let map = RedistrictingMap::new(names.iter().map(|n| (*n, "X"))).unwrap();
        let agg = aggregate_provinces(&d, &map).unwrap();
        let r = &agg.series("X").unwrap()[0];
        assert_eq!(r.cases, 100);
        assert_eq!(r.temp_mean, Some(23.0));
        assert_eq!(r.population, 4000);
    }

    #[test]
    fn singleton_groups_are_identity() {
        let records = vec![
            rec("a", 2010, 1, 19.3, 4),
            rec("a", 2010, 2, 21.7, 9),
            rec("b", 2010, 1, 17.1, 2),
            rec("b", 2010, 2, 16.9, 3),
        ];
        let d = Dataset::from_records(Scheme::Old, records).unwrap();
        let map = RedistrictingMap::new([("a", "a"), ("b", "b")]).unwrap();
        let agg = aggregate_provinces(&d, &map).unwrap();
        assert_eq!(agg.series("a"), d.series("a"));
        assert_eq!(agg.series("b"), d.series("b"));
    }

    #[test]
    fn aggregation_refuses_missing_climate() {
        let mut r = rec("a", 2010, 1, 20.0, 1);
        r.rel_humidity = None;
        let d = Dataset::from_records(Scheme::Old, vec![r]).unwrap();
        let map = RedistrictingMap::new([("a", "X")]).unwrap();
        let err = aggregate_provinces(&d, &map).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
        assert!(err.to_string().contains("impute"));
    }

    #[test]
    fn aggregation_rejects_unmapped_province() {
        let d = Dataset::from_records(Scheme::Old, vec![rec("a", 2010, 1, 20.0, 1)]).unwrap();
        let map = RedistrictingMap::new([("b", "X")]).unwrap();
        assert!(matches!(aggregate_provinces(&d, &map), Err(Error::Map(_))));
    }

    #[test]
    fn country_level_sums_and_means() {
        let hum = [50.0, 60.0, 70.0, 80.0, 90.0];
        let records = NEW_PROVINCES
            .iter()
            .zip(hum)
            .flat_map(|(p, h)| {
                (1..=3).map(move |m| {
                    let mut r = rec(p, 2020, m, 20.0, 100);
                    r.rel_humidity = Some(h);
                    r
                })
            })
            .collect();
        let d = Dataset::from_records(Scheme::New, records).unwrap();
        let c = to_country_level(&d).unwrap();
        assert_eq!(c.scheme(), Scheme::Country);
        let s = c.series(COUNTRY).unwrap();
        assert_eq!(s.len(), d.month_count());
        assert_eq!(s[0].cases, 500);
        assert_eq!(s[0].rel_humidity, Some(70.0));
    }

    #[test]
    fn scheme_detection() {
        assert_eq!(Scheme::detect(["Gitega", "Ngozi"]), Some(Scheme::Old));
        assert_eq!(Scheme::detect(["Gitega", "Burunga"]), Some(Scheme::New));
        assert_eq!(Scheme::detect(["Burundi"]), Some(Scheme::Country));
        assert_eq!(Scheme::detect(["Ngozi", "Burunga"]), None);
    }
}
