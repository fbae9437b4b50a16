//! Model specifications: which mean-structure blocks are active, how
//! coefficients are shared, and how dispersion is parameterized. Specs are
//! plain data; fitting code derives parameter layouts from them.

use crate::error::{Error, Result};
use crate::panel::{Resolution, UnitIndex};
use crate::spatial::SpatialStructure;
use crate::weights::{DecayKind, LagScheme};

/// A value that is either profiled over a grid during fitting or held fixed.
/// Serializes as the number itself, or the string "profile".
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profiled {
    Profile,
    Fixed(f64),
}

impl Profiled {
    pub fn fixed(self) -> Option<f64> {
        match self {
            Profiled::Fixed(v) => Some(v),
            Profiled::Profile => None,
        }
    }
}

impl serde::Serialize for Profiled {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Profiled::Profile => s.serialize_str("profile"),
            Profiled::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> serde::Deserialize<'de> for Profiled {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(serde::Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Profiled::Fixed(v)),
            Raw::Word(w) if w == "profile" => Ok(Profiled::Profile),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "expected a number or \"profile\", got \"{w}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoefSharing {
    Shared,
    PerUnit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DispersionSharing {
    Shared,
    PerUnit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DispersionSpec {
    pub sharing: DispersionSharing,
}

impl Default for DispersionSpec {
    fn default() -> Self {
        DispersionSpec {
            sharing: DispersionSharing::Shared,
        }
    }
}

/// Endemic time structure. In the autoregressive family these are positive
/// baseline levels; in the gravity family they are centered log-mean terms.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EndemicKind {
    None,
    FreePerTime,
    FreePerRegionTime,
    MonthSeasonal,
    /// exp(alpha0 + eta t + gamma sin(omega t) + delta cos(omega t)).
    /// omega defaults to 2 pi / 365 on daily axes and 2 pi / 12 on monthly.
    Harmonic {
        #[serde(default)]
        omega: Option<f64>,
    },
}

impl EndemicKind {
    pub fn resolved_omega(&self, resolution: Resolution) -> Option<f64> {
        match self {
            EndemicKind::Harmonic { omega } => Some(omega.unwrap_or(match resolution {
                Resolution::Daily => 2.0 * std::f64::consts::PI / 365.0,
                Resolution::Monthly => 2.0 * std::f64::consts::PI / 12.0,
            })),
            _ => None,
        }
    }
}

/// Spatial coupling used by the between-unit autoregressive term.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum CouplingSpec {
    AdjacencyLag1,
    PowerLaw { rho: Profiled },
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BetweenBlock {
    pub sharing: CoefSharing,
    pub coupling: CouplingSpec,
}

/// Optional multiplicative fixed effect on the endemic level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionEffect {
    PerRegion,
    PerDistrict,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct LagSpec {
    #[serde(flatten)]
    pub scheme: LagScheme,
    pub max_lag: usize,
}

/// Additive autoregressive count model: mean = within-unit history term
/// + coupled between-unit history term + endemic baseline.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EeSpec {
    #[serde(default)]
    pub within: Option<CoefSharing>,
    #[serde(default)]
    pub between: Option<BetweenBlock>,
    pub lags: LagSpec,
    pub endemic: EndemicKind,
    #[serde(default)]
    pub region_effect: Option<RegionEffect>,
    #[serde(default)]
    pub dispersion: DispersionSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GravityVariant {
    /// Free endemic trajectory per region.
    PerRegionEndemic,
    /// One endemic trajectory shared by all regions.
    CompositeSharedEndemic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EffectsLevel {
    /// One location level per region.
    Regional,
    /// Region levels plus centered per-district deviations.
    District,
}

/// Air-traffic term configuration: distance decay on district-airport
/// kilometres times transformed passenger volumes.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct GravityTerm {
    pub kernel: DecayKind,
    pub alpha: Profiled,
    /// Couple every region to all airports nationally instead of only its own.
    #[serde(default)]
    pub cross_region: bool,
}

/// Multiplicative (log-link) model for monthly district counts with location
/// effects, an endemic time structure, and an optional air-traffic term.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct GravitySpec {
    pub variant: GravityVariant,
    pub intercept: bool,
    pub effects: EffectsLevel,
    pub endemic: EndemicKind,
    #[serde(default)]
    pub gravity: Option<GravityTerm>,
    #[serde(default)]
    pub dispersion: DispersionSpec,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ModelSpec {
    #[serde(rename = "autoregressive")]
    Ee(EeSpec),
    Gravity(GravitySpec),
}

impl EeSpec {
    pub fn validate(&self) -> Result<()> {
        if matches!(self.endemic, EndemicKind::None) {
            return Err(Error::invalid(
                "autoregressive model requires an endemic block",
            ));
        }
        if self.lags.max_lag == 0 {
            return Err(Error::invalid("max lag must be at least 1"));
        }
        if let EndemicKind::Harmonic { omega: Some(w) } = self.endemic {
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::invalid(format!(
                    "harmonic frequency must be positive, got {w}"
                )));
            }
        }
        Ok(())
    }
}

impl GravitySpec {
    pub fn validate(&self) -> Result<()> {
        match (self.variant, self.endemic) {
            (GravityVariant::PerRegionEndemic, EndemicKind::FreePerRegionTime) => {}
            (GravityVariant::PerRegionEndemic, _) => {
                return Err(Error::invalid(
                    "per-region endemic variant requires a free per-region endemic block",
                ));
            }
            (GravityVariant::CompositeSharedEndemic, EndemicKind::FreePerRegionTime) => {
                return Err(Error::invalid(
                    "composite variant requires a shared endemic block",
                ));
            }
            _ => {}
        }
        if let EndemicKind::Harmonic { omega: Some(w) } = self.endemic {
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::invalid(format!(
                    "harmonic frequency must be positive, got {w}"
                )));
            }
        }
        Ok(())
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Ee(s) => s.validate(),
            ModelSpec::Gravity(s) => s.validate(),
        }
    }

    /// Number of parameters profiled on an outer grid (counted into k).
    pub fn n_profiled(&self) -> usize {
        match self {
            ModelSpec::Ee(s) => match s.between {
                Some(BetweenBlock {
                    coupling: CouplingSpec::PowerLaw {
                        rho: Profiled::Profile,
                    },
                    ..
                }) => 1,
                _ => 0,
            },
            ModelSpec::Gravity(s) => match s.gravity {
                Some(GravityTerm {
                    alpha: Profiled::Profile,
                    ..
                }) => 1,
                _ => 0,
            },
        }
    }
}

/// Data shape a parameter layout depends on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataDims {
    pub n_units: usize,
    pub n_regions: usize,
    pub n_times: usize,
    pub region_ids: Vec<String>,
    pub region_sizes: Vec<usize>,
    pub airports_per_region: Vec<usize>,
    pub n_airports: usize,
}

impl DataDims {
    pub fn new(units: &UnitIndex, n_times: usize, structure: Option<&SpatialStructure>) -> Self {
        let (airports_per_region, n_airports) = match structure {
            Some(s) => (
                (0..units.n_regions())
                    .map(|r| s.airports_of_region(r).len())
                    .collect(),
                s.airports().len(),
            ),
            None => (vec![0; units.n_regions()], 0),
        };
        DataDims {
            n_units: units.len(),
            n_regions: units.n_regions(),
            n_times,
            region_ids: units.regions().to_vec(),
            region_sizes: units.region_sizes(),
            airports_per_region,
            n_airports,
        }
    }
}

/// Pairwise mean exp(theta0 + theta1 u + theta2 v + theta3 d) for flow from a
/// patch with size measure u to one with size measure v at distance d.
pub fn general_gravity_mean(theta: [f64; 4], u: f64, v: f64, d: f64) -> f64 {
    (theta[0] + theta[1] * u + theta[2] * v + theta[3] * d).exp()
}
