//! Scenario series: ingestion, anomalies, covariate smoothing and synthetic
//! studies.
//!
//! CSV layout (UTF-8, comma separated, header row):
//!
//! | column      | type            | notes                                          |
//! |-------------|-----------------|------------------------------------------------|
//! | `year`      | integer         | required                                       |
//! | `member`    | integer >= 1    | optional; defaults to 1 (single-member series) |
//! | `value`     | decimal         | required                                       |
//! | `covariate` | decimal         | optional; identical across members in a year   |
//!
//! Every member must have a value for every year. Gaps are rejected, never
//! imputed.

mod simulate;
mod smooth;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use simulate::{
    covariate_ramp, simulate_study, AnalyticAttribution, MemberLaw, ScenarioTruth, SimulatedStudy, StudyTruth,
};
pub use smooth::{smooth_covariate, EndpointPolicy, SmootherSpec, WeightRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Observation,
    Actual,
    Counterfactual,
}

impl Scenario {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Observation => "observation",
            Scenario::Actual => "actual",
            Scenario::Counterfactual => "counterfactual",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "observation" | "obs" => Ok(Scenario::Observation),
            "actual" => Ok(Scenario::Actual),
            "counterfactual" | "cf" => Ok(Scenario::Counterfactual),
            other => Err(Error::invalid(format!("unknown scenario `{other}`"))),
        }
    }
}

/// Annual values for an ensemble of members, with an optional per-year
/// covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSeries {
    scenario: Scenario,
    years: Vec<i32>,
    /// `values[member][year_index]`
    values: Vec<Vec<f64>>,
    covariate: Option<Vec<f64>>,
}

impl ScenarioSeries {
    pub fn new(
        scenario: Scenario,
        years: Vec<i32>,
        values: Vec<Vec<f64>>,
        covariate: Option<Vec<f64>>,
    ) -> Result<Self> {
        if years.is_empty() {
            return Err(Error::Validation("series has no years".into()));
        }
        if values.is_empty() {
            return Err(Error::Validation("series has no members".into()));
        }
        if years.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation("years must be strictly increasing".into()));
        }
        if scenario == Scenario::Observation && values.len() != 1 {
            return Err(Error::Validation(format!(
                "an observation series has one member, got {}",
                values.len()
            )));
        }
        for (m, row) in values.iter().enumerate() {
            if row.len() != years.len() {
                return Err(Error::Validation(format!(
                    "member {} has {} values for {} years",
                    m + 1,
                    row.len(),
                    years.len()
                )));
            }
            if let Some(i) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "member {} year {} has a non-finite value",
                    m + 1,
                    years[i]
                )));
            }
        }
        if let Some(c) = &covariate {
            if c.len() != years.len() {
                return Err(Error::Validation(format!(
                    "covariate has {} entries for {} years",
                    c.len(),
                    years.len()
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation("covariate must be finite".into()));
            }
        }
        Ok(Self {
            scenario,
            years,
            values,
            covariate,
        })
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn member(&self, m: usize) -> &[f64] {
        &self.values[m]
    }

    pub fn covariate(&self) -> Option<&[f64]> {
        self.covariate.as_deref()
    }

    pub fn n_members(&self) -> usize {
        self.values.len()
    }

    pub fn n_years(&self) -> usize {
        self.years.len()
    }

    pub fn len(&self) -> usize {
        self.n_members() * self.n_years()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All values, member by member.
    pub fn pooled(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().flat_map(|r| r.iter().copied())
    }

    pub fn year_index(&self, year: i32) -> Option<usize> {
        self.years.binary_search(&year).ok()
    }

    pub fn covariate_at(&self, year: i32) -> Result<f64> {
        let cov = self
            .covariate
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("{} series has no covariate", self.scenario)))?;
        let i = self.year_index(year).ok_or_else(|| {
            Error::invalid(format!(
                "year {year} is outside the {} covariate range {}..={}",
                self.scenario,
                self.years[0],
                self.years[self.years.len() - 1]
            ))
        })?;
        Ok(cov[i])
    }

    pub fn with_scenario(mut self, scenario: Scenario) -> Result<Self> {
        if scenario == Scenario::Observation && self.n_members() != 1 {
            return Err(Error::Validation("an observation series has one member".into()));
        }
        self.scenario = scenario;
        Ok(self)
    }

    pub fn with_covariate(mut self, covariate: Option<Vec<f64>>) -> Result<Self> {
        self.covariate = covariate;
        Self::new(self.scenario, self.years, self.values, self.covariate)
    }

    /// Copy with `c` added to every value.
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        for row in &mut out.values {
            for v in row {
                *v += c;
            }
        }
        out
    }
}

/// Subtract the pooled mean over `ref_start..=ref_end` from every value.
pub fn compute_anomalies(series: &ScenarioSeries, ref_start: i32, ref_end: i32) -> Result<ScenarioSeries> {
    let idx: Vec<usize> = series
        .years
        .iter()
        .enumerate()
        .filter(|(_, &y)| y >= ref_start && y <= ref_end)
        .map(|(i, _)| i)
        .collect();
    if idx.is_empty() {
        return Err(Error::invalid(format!(
            "reference window {ref_start}..={ref_end} contains no years of the {} series",
            series.scenario
        )));
    }
    let n = (idx.len() * series.n_members()) as f64;
    let mean = series
        .values
        .iter()
        .map(|row| idx.iter().map(|&i| row[i]).sum::<f64>())
        .sum::<f64>()
        / n;
    Ok(series.shifted(-mean))
}

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Parse a series from CSV.
pub fn read_series<R: Read>(reader: R, scenario: Scenario) -> Result<ScenarioSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let year_col = col("year").ok_or_else(|| parse_err(1, "missing `year` column"))?;
    let value_col = col("value").ok_or_else(|| parse_err(1, "missing `value` column"))?;
    let member_col = col("member");
    let cov_col = col("covariate");

    // (year, member) -> value; year -> (covariate, line)
    let mut cells: BTreeMap<(i32, u32), f64> = BTreeMap::new();
    let mut cov: BTreeMap<i32, (f64, u64)> = BTreeMap::new();
    let mut members: BTreeSet<u32> = BTreeSet::new();

    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize, name: &str| -> Result<&str> {
            match rec.get(i) {
                Some(s) if !s.is_empty() => Ok(s),
                _ => Err(parse_err(line, format!("missing `{name}`"))),
            }
        };
        let year: i32 = field(year_col, "year")?
            .parse()
            .map_err(|_| parse_err(line, "`year` is not an integer"))?;
        let member: u32 = match member_col {
            Some(c) => field(c, "member")?
                .parse()
                .map_err(|_| parse_err(line, "`member` is not a positive integer"))?,
            None => 1,
        };
        if member == 0 {
            return Err(parse_err(line, "`member` must be >= 1"));
        }
        let value: f64 = field(value_col, "value")?
            .parse()
            .map_err(|_| parse_err(line, "`value` is not a number"))?;
        if !value.is_finite() {
            return Err(parse_err(line, "`value` must be finite"));
        }
        if cells.insert((year, member), value).is_some() {
            return Err(parse_err(
                line,
                format!("duplicate row for year {year}, member {member}"),
            ));
        }
        members.insert(member);
        if let Some(c) = cov_col {
            let x: f64 = field(c, "covariate")?
                .parse()
                .map_err(|_| parse_err(line, "`covariate` is not a number"))?;
            match cov.get(&year) {
                Some(&(prev, prev_line)) if prev != x => {
                    return Err(parse_err(
                        line,
                        format!("covariate for year {year} differs from line {prev_line}"),
                    ))
                }
                Some(_) => {}
                None => {
                    cov.insert(year, (x, line));
                }
            }
        }
    }
    if cells.is_empty() {
        return Err(parse_err(1, "no data rows"));
    }

    let years: Vec<i32> = cells.keys().map(|&(y, _)| y).collect::<BTreeSet<_>>().into_iter().collect();
    let mut values = Vec::with_capacity(members.len());
    for &m in &members {
        let mut row = Vec::with_capacity(years.len());
        for &y in &years {
            match cells.get(&(y, m)) {
                Some(&v) => row.push(v),
                None => {
                    return Err(Error::Validation(format!(
                        "member {m} has no value for year {y}"
                    )))
                }
            }
        }
        values.push(row);
    }
    let covariate = cov_col.map(|_| years.iter().map(|y| cov[y].0).collect());
    ScenarioSeries::new(scenario, years, values, covariate)
}

pub fn load_series(path: impl AsRef<Path>, scenario: Scenario) -> Result<ScenarioSeries> {
    let file = std::fs::File::open(path.as_ref())?;
    read_series(std::io::BufReader::new(file), scenario)
}

/// Write a series in the ingestion schema. Members are numbered from 1.
pub fn write_series<W: Write>(series: &ScenarioSeries, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let map = |e: csv::Error| Error::Io(std::io::Error::other(e));
    if series.covariate.is_some() {
        w.write_record(["year", "member", "value", "covariate"]).map_err(map)?;
    } else {
        w.write_record(["year", "member", "value"]).map_err(map)?;
    }
    for (i, year) in series.years.iter().enumerate() {
        for (m, row) in series.values.iter().enumerate() {
            let mut rec = vec![year.to_string(), (m + 1).to_string(), format!("{}", row[i])];
            if let Some(c) = &series.covariate {
                rec.push(format!("{}", c[i]));
            }
            w.write_record(&rec).map_err(map)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_series(series: &ScenarioSeries, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_series(series, std::io::BufWriter::new(file))
}
