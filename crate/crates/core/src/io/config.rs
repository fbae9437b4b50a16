//! TOML configuration files for model specs and simulation runs. The key
//! tree mirrors the spec types one to one; [`EXAMPLE_MODEL_CONFIG`] and
//! [`EXAMPLE_SIM_CONFIG`] are commented references kept honest by tests.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::sim::SimConfig;

pub fn read_model_spec(path: &Path) -> Result<ModelSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::schema(path, None, e.to_string()))?;
    toml::from_str(&text).map_err(|e| Error::schema(path, None, e.to_string()))
}

pub fn read_sim_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::schema(path, None, e.to_string()))?;
    toml::from_str(&text).map_err(|e| Error::schema(path, None, e.to_string()))
}

/// A full autoregressive model configuration with every block spelled out.
pub const EXAMPLE_MODEL_CONFIG: &str = r#"# Model family: "autoregressive" (additive, daily or monthly panels) or
# "gravity" (multiplicative log-link, monthly panels only).
family = "autoregressive"

# Own-past term: "shared" (one coefficient) or "per-unit". Omit to drop it.
within = "shared"

# Optional multiplicative level on the endemic term, "per-region" or
# "per-district". Omit to drop it.
region-effect = "per-region"

# Neighbour term; omit the whole block to drop it.
[between]
sharing = "shared"
# Coupling: "adjacency-lag1", or "power-law" with rho a number or "profile"
# to select it by grid search.
coupling = { type = "power-law", rho = "profile" }

# Lag weighting over the last max-lag steps: "single" (max-lag must be 1),
# "geometric" with p, "triangular", or "shifted-poisson" with kappa.
[lags]
scheme = "geometric"
p = 0.5
max-lag = 2

# Endemic time structure: "none", "free-per-time", "free-per-region-time",
# "month-seasonal", or "harmonic" (omega defaults to a yearly cycle).
[endemic]
kind = "harmonic"

# Dispersion: "shared" or "per-unit".
[dispersion]
sharing = "shared"
"#;

/// A gravity model configuration with the air-traffic term profiled.
pub const EXAMPLE_GRAVITY_CONFIG: &str = r#"family = "gravity"

# "per-region-endemic" fits one free endemic trajectory per region;
# "composite-shared-endemic" shares a single trajectory.
variant = "per-region-endemic"
intercept = true

# Location effects: "regional", or "district" to add centered per-district
# deviations.
effects = "district"

[endemic]
kind = "free-per-region-time"

# Air-traffic term; omit the block for a no-traffic baseline. The kernel is
# one of "power", "exponential", "exp-sqrt", "exp-normal"; alpha is a number
# or "profile". cross-region = true lets every airport reach every district.
[gravity]
kernel = "exponential"
alpha = "profile"
cross-region = false

[dispersion]
sharing = "shared"
"#;

/// A small self-contained simulation: spec, true parameters, seed.
pub const EXAMPLE_SIM_CONFIG: &str = r#"resolution = "daily"
origin = "2020-03-01"     # first kept step; burn-in precedes it
n-times = 200
seed = 20200301
# burn-in = 50            # optional; defaults to 50 (autoregressive) / 0 (gravity)

[[districts]]
id = "d00"
region = "r0"

[[districts]]
id = "d01"
region = "r0"

[spec]
family = "autoregressive"
within = "shared"

[spec.lags]
scheme = "single"
max-lag = 1

[spec.endemic]
kind = "harmonic"

[spec.dispersion]
sharing = "shared"

[params]
family = "autoregressive"
lambda = [0.4]
psi = [0.1]

[params.endemic]
kind = "harmonic"
values = { alpha0 = 1.1, eta = 0.0, gamma = 0.5, delta = 0.2 }

# Conditioning history for the first max-lag steps:
#   { kind = "endemic-draw" }  draws from the endemic level (default)
#   { kind = "fixed", counts = [[3], [1]] }  pins it, one row per district
[initial-history]
kind = "endemic-draw"
"#;
