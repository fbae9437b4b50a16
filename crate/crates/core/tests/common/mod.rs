//! Shared builders for integration tests: small deterministic panels,
//! ring-adjacency spatial structures, and airport covariate cubes.

use chrono::NaiveDate;
use epigrav_core::covariate::{CovariateCube, CovariateTransform};
use epigrav_core::panel::{CountPanel, District, Resolution, TimeAxis, UnitIndex};
use epigrav_core::spatial::{Airport, SpatialStructure};
use ndarray::Array2;

pub fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

pub fn unit_index(region_sizes: &[usize]) -> UnitIndex {
    let mut districts = Vec::new();
    let mut n = 0;
    for (r, &size) in region_sizes.iter().enumerate() {
        for _ in 0..size {
            districts.push(District {
                id: format!("d{n:02}"),
                region: format!("r{r}"),
            });
            n += 1;
        }
    }
    UnitIndex::new(districts).unwrap()
}

/// Deterministic counts mixing zeros with values up to ~14.
pub fn synthetic_counts(p: usize, t_len: usize) -> Array2<u64> {
    Array2::from_shape_fn((p, t_len), |(i, t)| {
        ((3 * i + 5 * t + i * t) % 13) as u64 + ((i + t) % 3) as u64
    })
}

pub fn daily_panel(region_sizes: &[usize], t_len: usize) -> CountPanel {
    let units = unit_index(region_sizes);
    let counts = synthetic_counts(units.len(), t_len);
    let axis = TimeAxis::new(Resolution::Daily, ymd(2014, 3, 1), t_len).unwrap();
    CountPanel::new(units, axis, counts).unwrap()
}

pub fn monthly_panel(region_sizes: &[usize], t_len: usize) -> CountPanel {
    let units = unit_index(region_sizes);
    let counts = synthetic_counts(units.len(), t_len);
    let axis = TimeAxis::new(Resolution::Monthly, ymd(2012, 1, 1), t_len).unwrap();
    CountPanel::new(units, axis, counts).unwrap()
}

/// Cycle graph over p >= 3 units.
pub fn ring_adjacency(p: usize) -> Array2<bool> {
    Array2::from_shape_fn((p, p), |(i, j)| {
        let d = (i as i64 - j as i64).rem_euclid(p as i64);
        d == 1 || d == p as i64 - 1
    })
}

#[allow(dead_code)]
pub fn ring_structure(units: &UnitIndex) -> SpatialStructure {
    SpatialStructure::from_adjacency(
        units,
        ring_adjacency(units.len()),
        Vec::new(),
        Array2::zeros((units.len(), 0)),
    )
    .unwrap()
}

/// Ring structure plus the given number of airports per region, with spread
/// road distances in 15..=205 km.
pub fn structure_with_airports(units: &UnitIndex, airports_per_region: &[usize]) -> SpatialStructure {
    let p = units.len();
    let mut airports = Vec::new();
    let mut k = 0;
    for (r, &n_air) in airports_per_region.iter().enumerate() {
        for _ in 0..n_air {
            airports.push(Airport {
                id: format!("a{k}"),
                region: format!("r{r}"),
            });
            k += 1;
        }
    }
    let n_air = airports.len();
    let km = Array2::from_shape_fn((p, n_air), |(u, a)| {
        15.0 + 190.0 * (0.5 + 0.5 * ((u * 7 + a * 11) as f64 * 0.37).sin())
    });
    SpatialStructure::from_adjacency(units, ring_adjacency(p), airports, km).unwrap()
}

/// Monthly passenger volumes with seasonal swings, log1p-transformed.
pub fn covariate_cube(axis: &TimeAxis, n_airports: usize) -> CovariateCube {
    let raw = Array2::from_shape_fn((n_airports, axis.len()), |(k, t)| {
        20_000.0 + 15_000.0 * (t as f64 * 0.5 + k as f64).sin() + 1_000.0 * k as f64
    });
    CovariateCube::new(axis.clone(), raw, CovariateTransform::Log1p).unwrap()
}

#[allow(dead_code)]
pub fn centered(v: Vec<f64>) -> Vec<f64> {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - m).collect()
}
