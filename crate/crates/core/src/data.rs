//! Reported case data: CSSE wide-format ingestion, observation sampling,
//! initial conditions, the data-driven death-rate guess and synthetic
//! twin datasets.

use std::collections::HashMap;
use std::io::Write;

use chrono::NaiveDate;
use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::forward::{solve_forward, SolverGrid, StateTrajectory};
use crate::model::{ParamBounds, ParamVec, StateVec};

/// Reported cumulative infections and deaths at one time (days).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedPoint {
    pub time: f64,
    pub infections: f64,
    pub deaths: f64,
}

impl ObservedPoint {
    pub const fn new(time: f64, infections: f64, deaths: f64) -> Self {
        Self {
            time,
            infections,
            deaths,
        }
    }
}

/// Desired infections and deaths `(I_d, D_d)` at the end time.
pub type TargetPoint = ObservedPoint;

/// A reported time series. The first entry is the initial datum (day 0 of
/// the outbreak, or the start of a window); the remaining entries are the
/// observations.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedSeries {
    pub region: String,
    /// Initial population `N(0)`, when known.
    pub population: Option<f64>,
    pub times: Vec<f64>,
    pub infections: Vec<f64>,
    pub deaths: Vec<f64>,
    /// Number of cells lifted by the running-maximum repair.
    pub repairs: usize,
}

impl ObservedSeries {
    pub fn new(
        region: impl Into<String>,
        population: Option<f64>,
        times: Vec<f64>,
        infections: Vec<f64>,
        deaths: Vec<f64>,
    ) -> Result<Self> {
        let s = Self {
            region: region.into(),
            population,
            times,
            infections,
            deaths,
            repairs: 0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if n == 0 || self.infections.len() != n || self.deaths.len() != n {
            return Err(Error::Format(format!(
                "series lengths differ or are empty (times {}, infections {}, deaths {})",
                n,
                self.infections.len(),
                self.deaths.len()
            )));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Format("series times must be strictly increasing".into()));
        }
        if self
            .infections
            .iter()
            .chain(&self.deaths)
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(Error::Format(
                "series counts must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn point(&self, k: usize) -> ObservedPoint {
        ObservedPoint::new(self.times[k], self.infections[k], self.deaths[k])
    }

    pub fn origin(&self) -> ObservedPoint {
        self.point(0)
    }

    pub fn last(&self) -> ObservedPoint {
        self.point(self.len() - 1)
    }

    /// Entries after the initial datum.
    pub fn observations(&self) -> impl Iterator<Item = ObservedPoint> + '_ {
        (1..self.len()).map(|k| self.point(k))
    }

    pub fn with_population(mut self, population: f64) -> Self {
        self.population = Some(population);
        self
    }

    /// Entries with `start ≤ t ≤ end`, keeping region and population.
    pub fn slice_time(&self, start: f64, end: f64) -> Result<Self> {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&k| self.times[k] >= start - 1e-9 && self.times[k] <= end + 1e-9)
            .collect();
        if idx.len() < 2 {
            return Err(Error::Range(format!(
                "fewer than two observations in [{start}, {end}]"
            )));
        }
        Ok(Self {
            region: self.region.clone(),
            population: self.population,
            times: idx.iter().map(|&k| self.times[k]).collect(),
            infections: idx.iter().map(|&k| self.infections[k]).collect(),
            deaths: idx.iter().map(|&k| self.deaths[k]).collect(),
            repairs: 0,
        })
    }

    /// Long-format export with header `date_offset,I_c,D_c`.
    pub fn write_long_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date_offset", "I_c", "D_c"])?;
        for k in 0..self.len() {
            w.write_record([
                fmt_num(self.times[k]),
                fmt_num(self.infections[k]),
                fmt_num(self.deaths[k]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

const CSSE_FIXED_COLUMNS: usize = 4;

struct WideTable {
    dates: Vec<NaiveDate>,
    totals: Vec<f64>,
}

fn read_wide(content: &str, region: &str, what: &str) -> Result<WideTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(content.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.len() <= CSSE_FIXED_COLUMNS {
        return Err(Error::Format(format!("{what}: no date columns in header")));
    }
    let dates = headers
        .iter()
        .skip(CSSE_FIXED_COLUMNS)
        .enumerate()
        .map(|(c, h)| {
            NaiveDate::parse_from_str(h.trim(), "%m/%d/%y").map_err(|e| {
                Error::Format(format!(
                    "{what}: header column {} `{h}` is not a m/d/yy date ({e})",
                    c + CSSE_FIXED_COLUMNS + 1
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut totals = vec![0.0; dates.len()];
    let mut found = false;
    for record in reader.records() {
        let record = record?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.get(1).map(str::trim) != Some(region) {
            continue;
        }
        found = true;
        for (c, total) in totals.iter_mut().enumerate() {
            let column = c + CSSE_FIXED_COLUMNS;
            let cell = record.get(column).unwrap_or("").trim();
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: column + 1,
                message: format!("{what}: `{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: column + 1,
                    message: format!("{what}: `{cell}` is not finite"),
                });
            }
            *total += v;
        }
    }
    if !found {
        return Err(Error::RegionNotFound(region.to_string()));
    }
    Ok(WideTable { dates, totals })
}

fn running_max(values: &mut [f64]) -> usize {
    let mut repairs = 0;
    for k in 1..values.len() {
        if values[k] < values[k - 1] {
            values[k] = values[k - 1];
            repairs += 1;
        }
    }
    repairs
}

/// Parses the CSSE global wide tables (`Province/State, Country/Region, Lat,
/// Long, <m/d/yy>...`) for one country/region. Province rows are summed;
/// dates before the first confirmed case are dropped and day 0 is the first
/// date with at least one confirmed case. Decreases in the cumulative counts
/// are repaired with a running maximum.
pub fn parse_csse(confirmed: &str, deaths: &str, region: &str) -> Result<ObservedSeries> {
    let conf = read_wide(confirmed, region, "confirmed")?;
    let dead = read_wide(deaths, region, "deaths")?;
    if conf.dates != dead.dates {
        return Err(Error::Format(
            "confirmed and deaths tables have different date columns".into(),
        ));
    }
    let start = conf
        .totals
        .iter()
        .position(|&v| v >= 1.0)
        .ok_or_else(|| Error::Range(format!("region `{region}` has no confirmed cases")))?;
    let day0 = conf.dates[start];
    let times = conf.dates[start..]
        .iter()
        .map(|d| (*d - day0).num_days() as f64)
        .collect();
    let mut infections = conf.totals[start..].to_vec();
    let mut deaths = dead.totals[start..].to_vec();
    let repairs = running_max(&mut infections) + running_max(&mut deaths);
    if repairs > 0 {
        warn!("{region}: repaired {repairs} decreasing cumulative counts");
    }
    let mut series = ObservedSeries::new(region, None, times, infections, deaths)?;
    series.repairs = repairs;
    Ok(series)
}

/// Reads a `region,population` table.
pub fn parse_population_table(content: &str) -> Result<HashMap<String, f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(content.as_bytes());
    let mut table = HashMap::new();
    for record in reader.records() {
        let record = record?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let region = record.get(0).unwrap_or("").trim().to_string();
        let cell = record.get(1).unwrap_or("").trim();
        let population: f64 = cell.parse().map_err(|_| Error::Parse {
            row,
            column: 2,
            message: format!("population `{cell}` is not a number"),
        })?;
        if !(population > 0.0) || !population.is_finite() {
            return Err(Error::Parse {
                row,
                column: 2,
                message: format!("population must be positive, got {population}"),
            });
        }
        table.insert(region, population);
    }
    Ok(table)
}

/// Keeps the initial datum plus every entry whose offset from it is a
/// positive multiple of `stride` days.
pub fn sample_observations(series: &ObservedSeries, stride: usize) -> Result<ObservedSeries> {
    if stride == 0 {
        return Err(Error::Range("stride must be at least one day".into()));
    }
    let t0 = series.times[0];
    let span = series.times[series.len() - 1] - t0;
    if stride as f64 > span {
        return Err(Error::Range(format!(
            "stride {stride} exceeds the series span of {span} days"
        )));
    }
    let s = stride as f64;
    let keep: Vec<usize> = (0..series.len())
        .filter(|&k| {
            let q = (series.times[k] - t0) / s;
            (q - q.round()).abs() < 1e-9
        })
        .collect();
    Ok(ObservedSeries {
        region: series.region.clone(),
        population: series.population,
        times: keep.iter().map(|&k| series.times[k]).collect(),
        infections: keep.iter().map(|&k| series.infections[k]).collect(),
        deaths: keep.iter().map(|&k| series.deaths[k]).collect(),
        repairs: series.repairs,
    })
}

/// `U₀ = [N(0) − I_c(0), 0, I_c(0), 0, D_c(0)]`.
pub fn initial_state(series: &ObservedSeries) -> Result<StateVec> {
    let population = series
        .population
        .ok_or_else(|| Error::Config(format!("no population given for `{}`", series.region)))?;
    let p = series.origin();
    if population <= p.infections {
        return Err(Error::Domain(format!(
            "population {population} must exceed initial infections {}",
            p.infections
        )));
    }
    Ok(StateVec::new(
        population - p.infections,
        0.0,
        p.infections,
        0.0,
        p.deaths,
    ))
}

/// Death-rate guess `μ = ΔD_c / (Δt · I_c)` per observation interval, using
/// the counts at the right end of the interval, clipped into the `μ` bounds
/// and repeated for each of the `substeps` steps.
pub fn mu_init(series: &ObservedSeries, bounds: &ParamBounds, substeps: usize) -> Vec<f64> {
    let (lo, hi) = (bounds.lower.mu, bounds.upper.mu);
    let mut out = Vec::with_capacity((series.len() - 1) * substeps);
    for k in 0..series.len() - 1 {
        let dt = series.times[k + 1] - series.times[k];
        let inf = series.infections[k + 1];
        let mu = if inf > 0.0 {
            ((series.deaths[k + 1] - series.deaths[k]) / (dt * inf)).clamp(lo, hi)
        } else {
            warn!(
                "{}: no infections at t = {}, using the midpoint of the mu bounds",
                series.region,
                series.times[k + 1]
            );
            0.5 * (lo + hi)
        };
        out.extend(std::iter::repeat_n(mu, substeps));
    }
    out
}

/// Synthetic dataset generated by the model itself.
#[derive(Debug, Clone)]
pub struct TwinData {
    pub series: ObservedSeries,
    pub theta: Vec<ParamVec>,
    pub trajectory: StateTrajectory,
}

/// Simulates `theta_star` from `u0` and reads `(I, D)` at the observation
/// times. With `noise > 0` each observation after the first is multiplied by
/// `1 + noise·u`, `u ~ U[-1, 1]` (seeded), then floored at the previous value
/// so the cumulative series stays non-decreasing.
pub fn synth_twin(
    theta_star: &[ParamVec],
    u0: &StateVec,
    grid: &SolverGrid,
    noise: f64,
    seed: u64,
) -> Result<TwinData> {
    if !(noise >= 0.0) {
        return Err(Error::Domain(format!("noise must be nonnegative ({noise})")));
    }
    let trajectory = solve_forward(u0, theta_star, grid)?;
    let obs_count = grid.observation_times().len();
    let mut infections = Vec::with_capacity(obs_count);
    let mut deaths = Vec::with_capacity(obs_count);
    for k in 0..obs_count {
        let u = trajectory.at_observation(k);
        infections.push(u.i);
        deaths.push(u.d);
    }
    if noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for k in 1..obs_count {
            infections[k] *= 1.0 + noise * rng.gen_range(-1.0..=1.0);
            deaths[k] *= 1.0 + noise * rng.gen_range(-1.0..=1.0);
            infections[k] = infections[k].max(infections[k - 1]);
            deaths[k] = deaths[k].max(deaths[k - 1]);
        }
    }
    let series = ObservedSeries::new(
        "synthetic",
        Some(u0.living()),
        grid.observation_times().to_vec(),
        infections,
        deaths,
    )?;
    Ok(TwinData {
        series,
        theta: theta_star.to_vec(),
        trajectory,
    })
}
