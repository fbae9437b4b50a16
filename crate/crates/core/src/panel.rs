//! Count panels: a unit index (districts grouped into regions), a calendar
//! time axis at daily or monthly resolution, and a nonnegative integer count
//! matrix indexed unit x time.

use chrono::{Datelike, NaiveDate};
use ndarray::Array2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    Daily,
    Monthly,
}

/// Regular calendar grid. Monthly axes are anchored to the first of a month;
/// index t in 0..len maps to origin + t steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeAxis {
    resolution: Resolution,
    origin: NaiveDate,
    len: usize,
}

pub(crate) fn add_months(first_of_month: NaiveDate, k: usize) -> NaiveDate {
    let total = first_of_month.year() as i64 * 12 + first_of_month.month0() as i64 + k as i64;
    let year = total.div_euclid(12) as i32;
    let month0 = total.rem_euclid(12) as u32;
    NaiveDate::from_ymd_opt(year, month0 + 1, 1).expect("valid month arithmetic")
}

pub(crate) fn days_in_month(year: i32, month: u32) -> u32 {
    let first = NaiveDate::from_ymd_opt(year, month, 1).expect("valid first of month");
    let next = add_months(first, 1);
    (next - first).num_days() as u32
}

impl TimeAxis {
    pub fn new(resolution: Resolution, origin: NaiveDate, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::invalid("time axis must have at least one point"));
        }
        if resolution == Resolution::Monthly && origin.day() != 1 {
            return Err(Error::invalid(format!(
                "monthly axis origin must be the first of a month, got {origin}"
            )));
        }
        Ok(TimeAxis {
            resolution,
            origin,
            len,
        })
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    pub fn origin(&self) -> NaiveDate {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Calendar date of index t.
    pub fn date(&self, t: usize) -> NaiveDate {
        debug_assert!(t < self.len);
        match self.resolution {
            Resolution::Daily => self.origin + chrono::Days::new(t as u64),
            Resolution::Monthly => add_months(self.origin, t),
        }
    }

    /// Calendar month (1..=12) of index t.
    pub fn month_of(&self, t: usize) -> u32 {
        self.date(t).month()
    }

    pub fn last_date(&self) -> NaiveDate {
        self.date(self.len - 1)
    }

    /// Index of a date on this axis, if covered.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        match self.resolution {
            Resolution::Daily => {
                let off = (date - self.origin).num_days();
                (off >= 0 && (off as usize) < self.len).then_some(off as usize)
            }
            Resolution::Monthly => {
                if date.day() != 1 {
                    return None;
                }
                let off = (date.year() as i64 * 12 + date.month0() as i64)
                    - (self.origin.year() as i64 * 12 + self.origin.month0() as i64);
                (off >= 0 && (off as usize) < self.len).then_some(off as usize)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct District {
    pub id: String,
    pub region: String,
}

/// Districts in fixed row order, grouped into regions. Region order follows
/// first appearance in the district list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitIndex {
    districts: Vec<District>,
    regions: Vec<String>,
    region_of: Vec<usize>,
    units_of_region: Vec<Vec<usize>>,
}

impl UnitIndex {
    pub fn new(districts: Vec<District>) -> Result<Self> {
        if districts.is_empty() {
            return Err(Error::invalid("unit index needs at least one district"));
        }
        let mut seen = std::collections::HashSet::new();
        for d in &districts {
            if !seen.insert(d.id.clone()) {
                return Err(Error::invalid(format!("duplicate district id {}", d.id)));
            }
        }
        let mut regions: Vec<String> = Vec::new();
        let mut region_of = Vec::with_capacity(districts.len());
        for d in &districts {
            let idx = match regions.iter().position(|r| *r == d.region) {
                Some(i) => i,
                None => {
                    regions.push(d.region.clone());
                    regions.len() - 1
                }
            };
            region_of.push(idx);
        }
        let mut units_of_region = vec![Vec::new(); regions.len()];
        for (u, &r) in region_of.iter().enumerate() {
            units_of_region[r].push(u);
        }
        Ok(UnitIndex {
            districts,
            regions,
            region_of,
            units_of_region,
        })
    }

    pub fn len(&self) -> usize {
        self.districts.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn districts(&self) -> &[District] {
        &self.districts
    }

    pub fn district_id(&self, unit: usize) -> &str {
        &self.districts[unit].id
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn region_of(&self, unit: usize) -> usize {
        self.region_of[unit]
    }

    pub fn units_of_region(&self, region: usize) -> &[usize] {
        &self.units_of_region[region]
    }

    /// District count per region, in region order.
    pub fn region_sizes(&self) -> Vec<usize> {
        self.units_of_region.iter().map(|v| v.len()).collect()
    }

    pub fn position(&self, district_id: &str) -> Option<usize> {
        self.districts.iter().position(|d| d.id == district_id)
    }
}

/// Immutable unit x time count matrix bound to its unit index and time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct CountPanel {
    units: UnitIndex,
    axis: TimeAxis,
    counts: Array2<u64>,
}

impl CountPanel {
    pub fn new(units: UnitIndex, axis: TimeAxis, counts: Array2<u64>) -> Result<Self> {
        if counts.nrows() != units.len() || counts.ncols() != axis.len() {
            return Err(Error::invalid(format!(
                "count matrix is {}x{}, expected {} units x {} times",
                counts.nrows(),
                counts.ncols(),
                units.len(),
                axis.len()
            )));
        }
        Ok(CountPanel {
            units,
            axis,
            counts,
        })
    }

    pub fn units(&self) -> &UnitIndex {
        &self.units
    }

    pub fn axis(&self) -> &TimeAxis {
        &self.axis
    }

    pub fn counts(&self) -> &Array2<u64> {
        &self.counts
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_times(&self) -> usize {
        self.axis.len()
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.counts.mapv(|c| c as f64)
    }

    /// Sum counts into complete calendar months; partial leading or trailing
    /// months are dropped. Errors when no complete month is covered.
    pub fn aggregate_to_monthly(&self) -> Result<CountPanel> {
        if self.axis.resolution() != Resolution::Daily {
            return Err(Error::invalid("monthly aggregation expects a daily panel"));
        }
        let months = complete_months(&self.axis)?;
        let monthly_axis = TimeAxis::new(Resolution::Monthly, months[0].0, months.len())?;
        let mut out = Array2::<u64>::zeros((self.n_units(), months.len()));
        for (m, &(first, first_idx, ndays)) in months.iter().enumerate() {
            debug_assert_eq!(self.axis.date(first_idx), first);
            for u in 0..self.n_units() {
                let mut s = 0u64;
                for d in 0..ndays {
                    s += self.counts[(u, first_idx + d)];
                }
                out[(u, m)] = s;
            }
        }
        CountPanel::new(self.units.clone(), monthly_axis, out)
    }
}

/// Complete months covered by a daily axis as (first day, start index, length).
fn complete_months(axis: &TimeAxis) -> Result<Vec<(NaiveDate, usize, usize)>> {
    let origin = axis.origin();
    let mut first = if origin.day() == 1 {
        origin
    } else {
        add_months(
            NaiveDate::from_ymd_opt(origin.year(), origin.month(), 1).unwrap(),
            1,
        )
    };
    let last_covered = axis.last_date();
    let mut months = Vec::new();
    loop {
        let ndays = days_in_month(first.year(), first.month()) as usize;
        let last_of_month = first + chrono::Days::new(ndays as u64 - 1);
        if last_of_month > last_covered {
            break;
        }
        let start_idx = axis.index_of(first).expect("month start within axis");
        months.push((first, start_idx, ndays));
        first = add_months(first, 1);
    }
    if months.is_empty() {
        return Err(Error::InsufficientSpan);
    }
    Ok(months)
}

/// Value at the mid-month day (day ceil(days_in_month / 2)) of each complete
/// month of a daily series. Returns the monthly axis alongside the slice.
pub fn mid_month_slice(axis: &TimeAxis, values: &[f64]) -> Result<(TimeAxis, Vec<f64>)> {
    if axis.resolution() != Resolution::Daily {
        return Err(Error::invalid("mid-month slice expects a daily axis"));
    }
    if values.len() != axis.len() {
        return Err(Error::invalid(format!(
            "series has {} values, axis has {} points",
            values.len(),
            axis.len()
        )));
    }
    let months = complete_months(axis)?;
    let monthly_axis = TimeAxis::new(Resolution::Monthly, months[0].0, months.len())?;
    let mut out = Vec::with_capacity(months.len());
    for &(_, first_idx, ndays) in &months {
        let mid_day = ndays.div_ceil(2);
        out.push(values[first_idx + (mid_day - 1)]);
    }
    Ok((monthly_axis, out))
}
