//! CSV schemas for the dataset files. Parsers report the file and line of
//! the first violation; writers emit exactly what the parsers accept, with
//! floats in shortest round-trip form so export and re-ingest are bit-exact.

use chrono::{Datelike, NaiveDate};
use ndarray::Array2;
use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use crate::covariate::{CovariateCube, CovariateTransform};
use crate::error::{Error, Result};
use crate::panel::{CountPanel, District, Resolution, TimeAxis, UnitIndex};
use crate::spatial::{Airport, SpatialStructure};

pub const COUNTS_HEADER: [&str; 4] = ["district_id", "region_id", "date", "cases"];
pub const ADJACENCY_HEADER: [&str; 2] = ["district_id_a", "district_id_b"];
pub const AIRPORTS_HEADER: [&str; 2] = ["airport_id", "region_id"];
pub const DISTANCES_HEADER: [&str; 3] = ["district_id", "airport_id", "km"];
pub const COVARIATES_HEADER: [&str; 3] = ["airport_id", "month", "passengers"];

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::schema(path, None, e.to_string()))
}

fn check_header(path: &Path, rdr: &mut csv::Reader<std::fs::File>, want: &[&str]) -> Result<()> {
    let got = rdr
        .headers()
        .map_err(|e| Error::schema(path, Some(1), e.to_string()))?;
    let cols: Vec<&str> = got.iter().collect();
    if cols != want {
        return Err(Error::schema(
            path,
            Some(1),
            format!("header must be `{}`, got `{}`", want.join(","), cols.join(",")),
        ));
    }
    Ok(())
}

fn rows(
    path: &Path,
    rdr: &mut csv::Reader<std::fs::File>,
    mut f: impl FnMut(u64, &csv::StringRecord) -> Result<()>,
) -> Result<()> {
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line());
            Error::schema(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        f(line, &rec)?;
    }
    Ok(())
}

fn parse_date(path: &Path, line: u64, s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|_| Error::schema(path, Some(line), format!("bad date `{s}`, want YYYY-MM-DD")))
}

fn parse_month(path: &Path, line: u64, s: &str) -> Result<NaiveDate> {
    let bad = || Error::schema(path, Some(line), format!("bad month `{s}`, want YYYY-MM"));
    let (y, m) = s.split_once('-').ok_or_else(bad)?;
    if y.len() != 4 || m.len() != 2 {
        return Err(bad());
    }
    let year: i32 = y.parse().map_err(|_| bad())?;
    let month: u32 = m.parse().map_err(|_| bad())?;
    NaiveDate::from_ymd_opt(year, month, 1).ok_or_else(bad)
}

fn month_index(origin: NaiveDate, date: NaiveDate) -> i64 {
    (date.year() as i64 * 12 + date.month0() as i64)
        - (origin.year() as i64 * 12 + origin.month0() as i64)
}

/// Read a count panel. Units are ordered by first appearance; the time axis
/// spans the min to max date and every (district, date) cell must be present
/// exactly once.
pub fn read_counts(path: &Path, resolution: Resolution) -> Result<CountPanel> {
    let mut rdr = open(path)?;
    check_header(path, &mut rdr, &COUNTS_HEADER)?;
    let mut districts: Vec<District> = Vec::new();
    let mut district_pos: HashMap<String, usize> = HashMap::new();
    let mut cells: HashMap<(usize, NaiveDate), u64> = HashMap::new();
    let mut dates: BTreeSet<NaiveDate> = BTreeSet::new();
    rows(path, &mut rdr, |line, rec| {
        if rec.len() != 4 {
            return Err(Error::schema(path, Some(line), "expected 4 columns"));
        }
        let date = parse_date(path, line, &rec[2])?;
        if resolution == Resolution::Monthly && date.day() != 1 {
            return Err(Error::schema(
                path,
                Some(line),
                format!("monthly data must be dated to the first of the month, got {date}"),
            ));
        }
        let cases: i64 = rec[3].parse().map_err(|_| {
            Error::schema(path, Some(line), format!("cases must be an integer, got `{}`", &rec[3]))
        })?;
        if cases < 0 {
            return Err(Error::schema(
                path,
                Some(line),
                format!("negative case count {cases} for district {}", &rec[0]),
            ));
        }
        let unit = match district_pos.get(&rec[0]) {
            Some(&u) => {
                if districts[u].region != rec[1] {
                    return Err(Error::schema(
                        path,
                        Some(line),
                        format!(
                            "district {} is in region {} here but {} earlier",
                            &rec[0], &rec[1], districts[u].region
                        ),
                    ));
                }
                u
            }
            None => {
                districts.push(District {
                    id: rec[0].to_string(),
                    region: rec[1].to_string(),
                });
                district_pos.insert(rec[0].to_string(), districts.len() - 1);
                districts.len() - 1
            }
        };
        if cells.insert((unit, date), cases as u64).is_some() {
            return Err(Error::schema(
                path,
                Some(line),
                format!("duplicate row for district {} at {date}", &rec[0]),
            ));
        }
        dates.insert(date);
        Ok(())
    })?;
    let (first, last) = match (dates.first(), dates.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => return Err(Error::schema(path, None, "no data rows")),
    };
    let n_times = match resolution {
        Resolution::Daily => (last - first).num_days() as usize + 1,
        Resolution::Monthly => month_index(first, last) as usize + 1,
    };
    let axis = TimeAxis::new(resolution, first, n_times)?;
    let units = UnitIndex::new(districts)?;
    let mut counts = Array2::zeros((units.len(), n_times));
    for i in 0..units.len() {
        for t in 0..n_times {
            let date = axis.date(t);
            match cells.get(&(i, date)) {
                Some(&c) => counts[(i, t)] = c,
                None => {
                    return Err(Error::schema(
                        path,
                        None,
                        format!("no row for district {} at {date}", units.district_id(i)),
                    ))
                }
            }
        }
    }
    CountPanel::new(units, axis, counts)
}

pub fn counts_csv(panel: &CountPanel) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COUNTS_HEADER).unwrap();
    for i in 0..panel.n_units() {
        let d = &panel.units().districts()[i];
        for t in 0..panel.n_times() {
            w.write_record([
                d.id.as_str(),
                d.region.as_str(),
                &panel.axis().date(t).format("%Y-%m-%d").to_string(),
                &panel.counts()[(i, t)].to_string(),
            ])
            .unwrap();
        }
    }
    w.into_inner().unwrap()
}

/// Read a symmetric adjacency matrix from an undirected edge list.
pub fn read_adjacency(path: &Path, units: &UnitIndex) -> Result<Array2<bool>> {
    let mut rdr = open(path)?;
    check_header(path, &mut rdr, &ADJACENCY_HEADER)?;
    let p = units.len();
    let mut adj = Array2::from_elem((p, p), false);
    rows(path, &mut rdr, |line, rec| {
        if rec.len() != 2 {
            return Err(Error::schema(path, Some(line), "expected 2 columns"));
        }
        let a = lookup_district(path, line, units, &rec[0])?;
        let b = lookup_district(path, line, units, &rec[1])?;
        if a == b {
            return Err(Error::schema(
                path,
                Some(line),
                format!("district {} listed as adjacent to itself", &rec[0]),
            ));
        }
        adj[(a, b)] = true;
        adj[(b, a)] = true;
        Ok(())
    })?;
    Ok(adj)
}

fn lookup_district(path: &Path, line: u64, units: &UnitIndex, id: &str) -> Result<usize> {
    units
        .position(id)
        .ok_or_else(|| Error::schema(path, Some(line), format!("unknown district id `{id}`")))
}

pub fn adjacency_csv(structure: &SpatialStructure) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ADJACENCY_HEADER).unwrap();
    let adj = structure.adjacency();
    for i in 0..adj.nrows() {
        for j in (i + 1)..adj.ncols() {
            if adj[(i, j)] {
                w.write_record([&structure.unit_ids()[i], &structure.unit_ids()[j]])
                    .unwrap();
            }
        }
    }
    w.into_inner().unwrap()
}

/// Read airports in file order; each must belong to a region present in the
/// count panel.
pub fn read_airports(path: &Path, units: &UnitIndex) -> Result<Vec<Airport>> {
    let mut rdr = open(path)?;
    check_header(path, &mut rdr, &AIRPORTS_HEADER)?;
    let mut airports: Vec<Airport> = Vec::new();
    rows(path, &mut rdr, |line, rec| {
        if rec.len() != 2 {
            return Err(Error::schema(path, Some(line), "expected 2 columns"));
        }
        if airports.iter().any(|a| a.id == rec[0]) {
            return Err(Error::schema(
                path,
                Some(line),
                format!("duplicate airport id `{}`", &rec[0]),
            ));
        }
        if !units.regions().iter().any(|r| r == &rec[1]) {
            return Err(Error::schema(
                path,
                Some(line),
                format!("airport {} names unknown region `{}`", &rec[0], &rec[1]),
            ));
        }
        airports.push(Airport {
            id: rec[0].to_string(),
            region: rec[1].to_string(),
        });
        Ok(())
    })?;
    Ok(airports)
}

pub fn airports_csv(structure: &SpatialStructure) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(AIRPORTS_HEADER).unwrap();
    for a in structure.airports() {
        w.write_record([a.id.as_str(), a.region.as_str()]).unwrap();
    }
    w.into_inner().unwrap()
}

/// Read the complete district x airport road-distance matrix in kilometres.
pub fn read_airport_distances(
    path: &Path,
    units: &UnitIndex,
    airports: &[Airport],
) -> Result<Array2<f64>> {
    let mut rdr = open(path)?;
    check_header(path, &mut rdr, &DISTANCES_HEADER)?;
    let mut km = Array2::from_elem((units.len(), airports.len()), f64::NAN);
    rows(path, &mut rdr, |line, rec| {
        if rec.len() != 3 {
            return Err(Error::schema(path, Some(line), "expected 3 columns"));
        }
        let i = lookup_district(path, line, units, &rec[0])?;
        let a = airports
            .iter()
            .position(|ap| ap.id == rec[1])
            .ok_or_else(|| {
                Error::schema(path, Some(line), format!("unknown airport id `{}`", &rec[1]))
            })?;
        let d: f64 = rec[2].parse().map_err(|_| {
            Error::schema(path, Some(line), format!("bad distance `{}`", &rec[2]))
        })?;
        if !d.is_finite() || d < 0.0 {
            return Err(Error::schema(
                path,
                Some(line),
                format!("distance must be finite and nonnegative, got {d}"),
            ));
        }
        if !km[(i, a)].is_nan() {
            return Err(Error::schema(
                path,
                Some(line),
                format!("duplicate distance for district {} and airport {}", &rec[0], &rec[1]),
            ));
        }
        km[(i, a)] = d;
        Ok(())
    })?;
    for i in 0..units.len() {
        for a in 0..airports.len() {
            if km[(i, a)].is_nan() {
                return Err(Error::schema(
                    path,
                    None,
                    format!(
                        "no distance for district {} and airport {}",
                        units.district_id(i),
                        airports[a].id
                    ),
                ));
            }
        }
    }
    Ok(km)
}

pub fn airport_distances_csv(structure: &SpatialStructure) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(DISTANCES_HEADER).unwrap();
    let km = structure.airport_km();
    for i in 0..km.nrows() {
        for a in 0..km.ncols() {
            // Display for f64 is the shortest decimal that parses back to
            // the same bits, so export and re-ingest are exact.
            w.write_record([
                structure.unit_ids()[i].as_str(),
                structure.airports()[a].id.as_str(),
                &km[(i, a)].to_string(),
            ])
            .unwrap();
        }
    }
    w.into_inner().unwrap()
}

/// Read monthly passenger volumes for every airport over a contiguous month
/// range; each (airport, month) cell must be present exactly once.
pub fn read_covariates(
    path: &Path,
    airports: &[Airport],
    transform: CovariateTransform,
) -> Result<CovariateCube> {
    let mut rdr = open(path)?;
    check_header(path, &mut rdr, &COVARIATES_HEADER)?;
    let mut cells: HashMap<(usize, NaiveDate), f64> = HashMap::new();
    let mut months: BTreeSet<NaiveDate> = BTreeSet::new();
    rows(path, &mut rdr, |line, rec| {
        if rec.len() != 3 {
            return Err(Error::schema(path, Some(line), "expected 3 columns"));
        }
        let a = airports
            .iter()
            .position(|ap| ap.id == rec[0])
            .ok_or_else(|| {
                Error::schema(path, Some(line), format!("unknown airport id `{}`", &rec[0]))
            })?;
        let month = parse_month(path, line, &rec[1])?;
        let v: f64 = rec[2].parse().map_err(|_| {
            Error::schema(path, Some(line), format!("bad passenger volume `{}`", &rec[2]))
        })?;
        if !v.is_finite() || v < 0.0 {
            return Err(Error::schema(
                path,
                Some(line),
                format!("passenger volume must be finite and nonnegative, got {v}"),
            ));
        }
        if cells.insert((a, month), v).is_some() {
            return Err(Error::schema(
                path,
                Some(line),
                format!("duplicate volume for airport {} in {}", &rec[0], &rec[1]),
            ));
        }
        months.insert(month);
        Ok(())
    })?;
    let (first, last) = match (months.first(), months.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => return Err(Error::schema(path, None, "no data rows")),
    };
    let n_months = month_index(first, last) as usize + 1;
    let axis = TimeAxis::new(Resolution::Monthly, first, n_months)?;
    let mut raw = Array2::zeros((airports.len(), n_months));
    for a in 0..airports.len() {
        for t in 0..n_months {
            let month = axis.date(t);
            match cells.get(&(a, month)) {
                Some(&v) => raw[(a, t)] = v,
                None => {
                    return Err(Error::schema(
                        path,
                        None,
                        format!(
                            "no volume for airport {} in {}",
                            airports[a].id,
                            month.format("%Y-%m")
                        ),
                    ))
                }
            }
        }
    }
    CovariateCube::new(axis, raw, transform)
}

pub fn covariates_csv(structure: &SpatialStructure, cube: &CovariateCube) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COVARIATES_HEADER).unwrap();
    for a in 0..cube.n_airports() {
        for t in 0..cube.months().len() {
            w.write_record([
                structure.airports()[a].id.as_str(),
                &cube.months().date(t).format("%Y-%m").to_string(),
                &cube.raw()[(a, t)].to_string(),
            ])
            .unwrap();
        }
    }
    w.into_inner().unwrap()
}
