//! Rendered output documents: human-readable fit and comparison tables,
//! long-format trajectory CSV, and the per-run reproducibility manifest.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::compare::{AblationRow, LagScanRow, SeasonComparison, Trajectory};
use crate::fit::FitResult;
use crate::model::{EffectsLevel, ModelSpec};

fn family_name(spec: &ModelSpec) -> &'static str {
    match spec {
        ModelSpec::Ee(_) => "autoregressive",
        ModelSpec::Gravity(_) => "gravity",
    }
}

/// Multi-line summary of one fit: metrics, profiled decays, and parameter
/// blocks in natural space.
pub fn fit_table(r: &FitResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "family        {}", family_name(&r.spec));
    let _ = writeln!(s, "observations  {}", r.n_obs);
    let _ = writeln!(s, "parameters    {}", r.k);
    let _ = writeln!(s, "log-lik       {:.6}", r.log_lik);
    let _ = writeln!(s, "aic           {:.6}", r.aic);
    let _ = writeln!(s, "pseudo-R2     {:.4}", r.pseudo_r2);
    let _ = writeln!(s, "burn-in       {}", r.burn_in);
    let _ = writeln!(
        s,
        "converged     {} ({} iterations, grad norm {:.3e})",
        r.converged, r.iterations, r.grad_norm
    );
    for (name, value) in &r.profiled {
        let _ = writeln!(s, "profiled      {name} = {value:.6}");
    }
    for (name, values) in &r.params {
        let joined = values
            .iter()
            .map(|v| format!("{v:.6}"))
            .collect::<Vec<_>>()
            .join(" ");
        let _ = writeln!(s, "  {name:<18} {joined}");
    }
    for note in &r.notes {
        let _ = writeln!(s, "note: {note}");
    }
    s
}

pub fn lag_scan_table(rows: &[LagScanRow]) -> String {
    let mut s = String::from("max-lag    log-lik            k        aic   pseudo-R2  converged\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{:>7} {:>10.4} {:>12} {:>10.4} {:>11.4}  {}",
            r.max_lag, r.log_lik, r.k, r.aic, r.pseudo_r2, r.converged
        );
    }
    s
}

pub fn season_table(c: &SeasonComparison) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<22} {:>12} {:>6} {:>12} {:>10}",
        "endemic", "log-lik", "k", "aic", "pseudo-R2"
    );
    for (name, r) in [("month-seasonal", &c.seasonal), ("free-per-time", &c.free)] {
        let _ = writeln!(
            s,
            "{:<22} {:>12.4} {:>6} {:>12.4} {:>10.4}",
            name, r.log_lik, r.k, r.aic, r.pseudo_r2
        );
    }
    let _ = writeln!(s, "pseudo-R2 gap (free - seasonal): {:.4}", c.pseudo_r2_gap);
    let months = [
        "jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec",
    ];
    let _ = writeln!(s, "month effects (centered log scale, ma2 smoothed):");
    for (i, m) in months.iter().enumerate() {
        let _ = writeln!(
            s,
            "  {m} {:>8.4} {:>8.4}",
            c.month_effects[i], c.month_effects_ma2[i]
        );
    }
    s
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<10} {:<10} {:>14} {:>14} {:>12} {:>12}",
        "effects", "endemic", "R2 without", "R2 with", "aic without", "aic with"
    );
    for r in rows {
        let effects = match r.effects {
            EffectsLevel::Regional => "regional",
            EffectsLevel::District => "district",
        };
        let _ = writeln!(
            s,
            "{:<10} {:<10} {:>14.4} {:>14.4} {:>12.2} {:>12.2}",
            effects,
            r.endemic,
            r.without_gravity.pseudo_r2,
            r.with_gravity.pseudo_r2,
            r.without_gravity.aic,
            r.with_gravity.aic
        );
    }
    s
}

/// Long-format CSV `scope,t,value` where value is the centered log endemic
/// level, the scale-free quantity suited to overlaying series.
pub fn trajectory_csv(trajectory: &Trajectory) -> String {
    let mut s = String::from("scope,t,value\n");
    for series in &trajectory.series {
        for (t, v) in series.times.iter().zip(&series.log_level) {
            let _ = writeln!(s, "{},{t},{v}", series.scope);
        }
    }
    s
}

/// Everything needed to re-run a command to identical output: the argv, the
/// seed, the tool version, and content hashes of every input file read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub version: String,
    /// Input path to SHA-256 hex of its bytes at run time.
    pub input_hashes: BTreeMap<String, String>,
    /// File names written to the output directory, manifest excluded.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> crate::error::Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| crate::error::Error::invalid(format!("run manifest: {e}")))
    }
}
