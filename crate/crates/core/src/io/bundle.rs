//! Dataset bundles: a directory of CSV files described by a `manifest.toml`
//! that declares the time resolution, the file roles, and content hashes.
//! Ingest validates everything up front and either returns fully checked
//! in-memory objects or the first error, never partial data.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::covariate::{CovariateCube, CovariateTransform};
use crate::error::{Error, Result};
use crate::panel::{CountPanel, Resolution};
use crate::spatial::SpatialStructure;

use super::{schema, sha256_hex, write_atomic};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Manifest {
    pub resolution: Resolution,
    pub counts: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub airports: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub airport_distances: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<String>,
    #[serde(default = "default_transform")]
    pub covariate_transform: CovariateTransform,
    /// File name to SHA-256 hex. Entries are verified on ingest; files
    /// without an entry are accepted unverified.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub hashes: BTreeMap<String, String>,
}

fn default_transform() -> CovariateTransform {
    CovariateTransform::Log1p
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub resolution: Resolution,
    pub n_districts: usize,
    pub n_regions: usize,
    pub n_times: usize,
    pub first_date: chrono::NaiveDate,
    pub last_date: chrono::NaiveDate,
    pub n_adjacency_edges: usize,
    pub n_airports: usize,
    pub n_covariate_months: usize,
    pub hashes_verified: usize,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "counts: {} districts in {} regions, {} {} steps ({} to {})",
            self.n_districts,
            self.n_regions,
            self.n_times,
            match self.resolution {
                Resolution::Daily => "daily",
                Resolution::Monthly => "monthly",
            },
            self.first_date,
            self.last_date
        )?;
        writeln!(
            f,
            "spatial: {} adjacency edges, {} airports",
            self.n_adjacency_edges, self.n_airports
        )?;
        writeln!(f, "covariates: {} months", self.n_covariate_months)?;
        write!(f, "hashes verified: {}", self.hashes_verified)
    }
}

#[derive(Debug)]
pub struct Ingested {
    pub panel: CountPanel,
    pub structure: Option<SpatialStructure>,
    pub cube: Option<CovariateCube>,
    pub report: ValidationReport,
}

/// Load and validate a bundle directory.
pub fn ingest(dir: &Path) -> Result<Ingested> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| Error::schema(&manifest_path, None, e.to_string()))?;
    let manifest: Manifest =
        toml::from_str(&text).map_err(|e| Error::schema(&manifest_path, None, e.to_string()))?;

    let mut hashes_verified = 0;
    for (name, want) in &manifest.hashes {
        let file = dir.join(name);
        let bytes = std::fs::read(&file).map_err(|e| Error::schema(&file, None, e.to_string()))?;
        let got = sha256_hex(&bytes);
        if !got.eq_ignore_ascii_case(want) {
            return Err(Error::schema(
                &file,
                None,
                format!("content hash mismatch: manifest declares {want}, file has {got}"),
            ));
        }
        hashes_verified += 1;
    }

    let panel = schema::read_counts(&dir.join(&manifest.counts), manifest.resolution)?;
    let units = panel.units().clone();

    if manifest.airports.is_some() != manifest.airport_distances.is_some() {
        return Err(Error::schema(
            &manifest_path,
            None,
            "airports and airport-distances must be declared together",
        ));
    }
    if manifest.covariates.is_some() && manifest.airports.is_none() {
        return Err(Error::schema(
            &manifest_path,
            None,
            "covariates need an airports file to define their rows",
        ));
    }

    let adjacency = match &manifest.adjacency {
        Some(name) => Some(schema::read_adjacency(&dir.join(name), &units)?),
        None => None,
    };
    let airports = match &manifest.airports {
        Some(name) => schema::read_airports(&dir.join(name), &units)?,
        None => Vec::new(),
    };
    let airport_km = match &manifest.airport_distances {
        Some(name) => schema::read_airport_distances(&dir.join(name), &units, &airports)?,
        None => Array2::zeros((units.len(), 0)),
    };

    let structure = if adjacency.is_some() || !airports.is_empty() {
        let adj = adjacency.unwrap_or_else(|| Array2::from_elem((units.len(), units.len()), false));
        Some(SpatialStructure::from_adjacency(
            &units, adj, airports, airport_km,
        )?)
    } else {
        None
    };

    let cube = match &manifest.covariates {
        Some(name) => Some(schema::read_covariates(
            &dir.join(name),
            structure.as_ref().expect("airports checked above").airports(),
            manifest.covariate_transform,
        )?),
        None => None,
    };

    let report = ValidationReport {
        resolution: manifest.resolution,
        n_districts: panel.n_units(),
        n_regions: units.n_regions(),
        n_times: panel.n_times(),
        first_date: panel.axis().date(0),
        last_date: panel.axis().last_date(),
        n_adjacency_edges: structure
            .as_ref()
            .map(|s| s.adjacency().iter().filter(|&&b| b).count() / 2)
            .unwrap_or(0),
        n_airports: structure.as_ref().map(|s| s.airports().len()).unwrap_or(0),
        n_covariate_months: cube.as_ref().map(|c| c.months().len()).unwrap_or(0),
        hashes_verified,
    };
    Ok(Ingested {
        panel,
        structure,
        cube,
        report,
    })
}

/// Current content hashes of a bundle's manifest and every file it declares,
/// keyed by path as given. Used to record what a run actually read.
pub fn file_hashes(dir: &Path) -> Result<BTreeMap<String, String>> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| Error::schema(&manifest_path, None, e.to_string()))?;
    let manifest: Manifest =
        toml::from_str(&text).map_err(|e| Error::schema(&manifest_path, None, e.to_string()))?;
    let mut out = BTreeMap::new();
    out.insert(
        manifest_path.display().to_string(),
        sha256_hex(text.as_bytes()),
    );
    let names = [
        Some(&manifest.counts),
        manifest.adjacency.as_ref(),
        manifest.airports.as_ref(),
        manifest.airport_distances.as_ref(),
        manifest.covariates.as_ref(),
    ];
    for name in names.into_iter().flatten() {
        let path = dir.join(name);
        out.insert(path.display().to_string(), super::sha256_file(&path)?);
    }
    Ok(out)
}

/// Write a bundle directory with all content hashes filled in. Spatial and
/// covariate files are written only when the corresponding data is present.
pub fn export(
    dir: &Path,
    panel: &CountPanel,
    structure: Option<&SpatialStructure>,
    cube: Option<&CovariateCube>,
) -> Result<Manifest> {
    if let Some(c) = cube {
        let n = structure.map(|s| s.airports().len()).unwrap_or(0);
        if n != c.n_airports() {
            return Err(Error::invalid(format!(
                "covariate cube has {} airports but the spatial structure has {n}",
                c.n_airports()
            )));
        }
    }
    std::fs::create_dir_all(dir)?;
    let mut hashes = BTreeMap::new();
    let mut put = |name: &str, bytes: Vec<u8>| -> Result<()> {
        hashes.insert(name.to_string(), sha256_hex(&bytes));
        write_atomic(&dir.join(name), &bytes)
    };

    put("counts.csv", schema::counts_csv(panel))?;
    let mut manifest = Manifest {
        resolution: panel.axis().resolution(),
        counts: "counts.csv".to_string(),
        adjacency: None,
        airports: None,
        airport_distances: None,
        covariates: None,
        covariate_transform: cube
            .map(|c| c.transform())
            .unwrap_or(CovariateTransform::Log1p),
        hashes: BTreeMap::new(),
    };
    if let Some(s) = structure {
        put("adjacency.csv", schema::adjacency_csv(s))?;
        manifest.adjacency = Some("adjacency.csv".to_string());
        if !s.airports().is_empty() {
            put("airports.csv", schema::airports_csv(s))?;
            put("airport-distances.csv", schema::airport_distances_csv(s))?;
            manifest.airports = Some("airports.csv".to_string());
            manifest.airport_distances = Some("airport-distances.csv".to_string());
        }
        if let Some(c) = cube {
            put("covariates.csv", schema::covariates_csv(s, c))?;
            manifest.covariates = Some("covariates.csv".to_string());
        }
    }
    manifest.hashes = hashes;
    let text = toml::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())?;
    Ok(manifest)
}
