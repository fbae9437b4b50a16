//! Parameter packing: natural model parameters map to one flat unconstrained
//! vector and back. Positive parameters travel through log/exp, sum-to-zero
//! blocks drop their last coordinate, everything else is passed through.

use crate::error::{Error, Result};
use crate::model::{
    CoefSharing, DataDims, DispersionSharing, EeSpec, EffectsLevel, EndemicKind, GravitySpec,
    ModelSpec, RegionEffect,
};

const SUM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    /// natural > 0, packed = ln(natural)
    Log,
    Identity,
    /// natural sums to zero; packed drops the last coordinate
    SumToZero,
}

/// What a segment holds, so pack/unpack and gradient assembly can dispatch
/// without parsing names.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SegKind {
    Lambda,
    Phi,
    EndemicLevel,
    EndemicLevelRegion(usize),
    EndemicMonth,
    HarmAlpha0,
    HarmEta,
    HarmGamma,
    HarmDelta,
    RegionEffect,
    Intercept,
    RegionLoc,
    DistrictDev(usize),
    Theta(usize),
    Psi,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub name: String,
    pub transform: Transform,
    pub n_natural: usize,
    pub(crate) kind: SegKind,
}

impl Segment {
    fn new(name: impl Into<String>, transform: Transform, n: usize, kind: SegKind) -> Self {
        Segment {
            name: name.into(),
            transform,
            n_natural: n,
            kind,
        }
    }

    pub fn packed_len(&self) -> usize {
        match self.transform {
            Transform::SumToZero => self.n_natural - 1,
            _ => self.n_natural,
        }
    }
}

/// Ordered segments of the packed vector for one spec on one data shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    segments: Vec<Segment>,
    offsets: Vec<usize>,
    packed_len: usize,
}

impl ParamLayout {
    fn from_segments(segments: Vec<Segment>) -> Self {
        let mut offsets = Vec::with_capacity(segments.len());
        let mut off = 0;
        for s in &segments {
            offsets.push(off);
            off += s.packed_len();
        }
        ParamLayout {
            segments,
            offsets,
            packed_len: off,
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn packed_len(&self) -> usize {
        self.packed_len
    }

    pub fn offset(&self, idx: usize) -> usize {
        self.offsets[idx]
    }

    /// Segment and packed offset by name.
    pub fn find(&self, name: &str) -> Option<(&Segment, usize)> {
        self.segments
            .iter()
            .zip(&self.offsets)
            .find(|(s, _)| s.name == name)
            .map(|(s, o)| (s, *o))
    }
}

/// Endemic time parameters in natural space.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "kebab-case")]
pub enum EndemicParams {
    None,
    FreePerTime(Vec<f64>),
    /// Outer index: region, in region order.
    FreePerRegionTime(Vec<Vec<f64>>),
    /// Calendar month effects, January first.
    MonthSeasonal(Vec<f64>),
    Harmonic {
        alpha0: f64,
        eta: f64,
        gamma: f64,
        delta: f64,
    },
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EeParams {
    /// Within-unit coefficient(s); empty when the block is off.
    #[serde(default)]
    pub lambda: Vec<f64>,
    /// Between-unit coefficient(s); empty when the block is off.
    #[serde(default)]
    pub phi: Vec<f64>,
    pub endemic: EndemicParams,
    /// Multiplicative log effects on the endemic level; sum to zero.
    #[serde(default)]
    pub region_effect: Vec<f64>,
    pub psi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct GravityParams {
    #[serde(default)]
    pub intercept: Option<f64>,
    pub endemic: EndemicParams,
    /// Location level per region; sums to zero when an intercept is present.
    pub region_loc: Vec<f64>,
    /// Centered district deviations, outer index region; empty for
    /// regional-level effects.
    #[serde(default)]
    pub district_dev: Vec<Vec<f64>>,
    /// Air-traffic coefficients, outer index region; empty when the term is
    /// off. Inner length is the region's airport count, or the national count
    /// under cross-region coupling.
    #[serde(default)]
    pub theta: Vec<Vec<f64>>,
    pub psi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum NaturalParams {
    #[serde(rename = "autoregressive")]
    Ee(EeParams),
    Gravity(GravityParams),
}

impl NaturalParams {
    pub fn as_ee(&self) -> Option<&EeParams> {
        match self {
            NaturalParams::Ee(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_gravity(&self) -> Option<&GravityParams> {
        match self {
            NaturalParams::Gravity(p) => Some(p),
            _ => None,
        }
    }
}

/// A packed vector together with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
    layout: ParamLayout,
}

impl ParamVector {
    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }
}

fn sharing_len(sharing: CoefSharing, n_units: usize) -> usize {
    match sharing {
        CoefSharing::Shared => 1,
        CoefSharing::PerUnit => n_units,
    }
}

fn ee_layout(spec: &EeSpec, dims: &DataDims) -> Result<ParamLayout> {
    spec.validate()?;
    let mut segs = Vec::new();
    if let Some(sharing) = spec.within {
        segs.push(Segment::new(
            "lambda",
            Transform::Log,
            sharing_len(sharing, dims.n_units),
            SegKind::Lambda,
        ));
    }
    if let Some(b) = &spec.between {
        segs.push(Segment::new(
            "phi",
            Transform::Log,
            sharing_len(b.sharing, dims.n_units),
            SegKind::Phi,
        ));
    }
    push_endemic_segments(&mut segs, spec.endemic, dims, Transform::Log, true)?;
    if let Some(effect) = spec.region_effect {
        let g = match effect {
            RegionEffect::PerRegion => dims.n_regions,
            RegionEffect::PerDistrict => dims.n_units,
        };
        segs.push(Segment::new(
            "region_effect",
            Transform::SumToZero,
            g,
            SegKind::RegionEffect,
        ));
    }
    push_psi_segment(&mut segs, spec.dispersion.sharing, dims);
    Ok(ParamLayout::from_segments(segs))
}

fn gravity_layout(spec: &GravitySpec, dims: &DataDims) -> Result<ParamLayout> {
    spec.validate()?;
    let mut segs = Vec::new();
    if spec.intercept {
        segs.push(Segment::new(
            "intercept",
            Transform::Identity,
            1,
            SegKind::Intercept,
        ));
    }
    push_endemic_segments(&mut segs, spec.endemic, dims, Transform::SumToZero, false)?;
    segs.push(Segment::new(
        "region_loc",
        if spec.intercept {
            Transform::SumToZero
        } else {
            Transform::Identity
        },
        dims.n_regions,
        SegKind::RegionLoc,
    ));
    if spec.effects == EffectsLevel::District {
        for (r, id) in dims.region_ids.iter().enumerate() {
            segs.push(Segment::new(
                format!("district_dev.{id}"),
                Transform::SumToZero,
                dims.region_sizes[r],
                SegKind::DistrictDev(r),
            ));
        }
    }
    if let Some(term) = &spec.gravity {
        for (r, id) in dims.region_ids.iter().enumerate() {
            let k = if term.cross_region {
                dims.n_airports
            } else {
                dims.airports_per_region[r]
            };
            if k == 0 {
                return Err(Error::invalid(format!(
                    "region {id} has no airports for the air-traffic term"
                )));
            }
            segs.push(Segment::new(
                format!("theta.{id}"),
                Transform::Identity,
                k,
                SegKind::Theta(r),
            ));
        }
    }
    push_psi_segment(&mut segs, spec.dispersion.sharing, dims);
    Ok(ParamLayout::from_segments(segs))
}

fn push_endemic_segments(
    segs: &mut Vec<Segment>,
    endemic: EndemicKind,
    dims: &DataDims,
    level_transform: Transform,
    with_alpha0: bool,
) -> Result<()> {
    match endemic {
        EndemicKind::None => {}
        EndemicKind::FreePerTime => {
            segs.push(Segment::new(
                "endemic.level",
                level_transform,
                dims.n_times,
                SegKind::EndemicLevel,
            ));
        }
        EndemicKind::FreePerRegionTime => {
            for (r, id) in dims.region_ids.iter().enumerate() {
                segs.push(Segment::new(
                    format!("endemic.level.{id}"),
                    level_transform,
                    dims.n_times,
                    SegKind::EndemicLevelRegion(r),
                ));
            }
        }
        EndemicKind::MonthSeasonal => {
            segs.push(Segment::new(
                "endemic.month",
                level_transform,
                12,
                SegKind::EndemicMonth,
            ));
        }
        EndemicKind::Harmonic { .. } => {
            if with_alpha0 {
                segs.push(Segment::new(
                    "endemic.alpha0",
                    Transform::Identity,
                    1,
                    SegKind::HarmAlpha0,
                ));
            }
            for (name, kind) in [
                ("endemic.eta", SegKind::HarmEta),
                ("endemic.gamma", SegKind::HarmGamma),
                ("endemic.delta", SegKind::HarmDelta),
            ] {
                segs.push(Segment::new(name, Transform::Identity, 1, kind));
            }
        }
    }
    Ok(())
}

fn push_psi_segment(segs: &mut Vec<Segment>, sharing: DispersionSharing, dims: &DataDims) {
    let n = match sharing {
        DispersionSharing::Shared => 1,
        DispersionSharing::PerUnit => dims.n_units,
    };
    segs.push(Segment::new("psi", Transform::Log, n, SegKind::Psi));
}

pub fn layout(spec: &ModelSpec, dims: &DataDims) -> Result<ParamLayout> {
    match spec {
        ModelSpec::Ee(s) => ee_layout(s, dims),
        ModelSpec::Gravity(s) => gravity_layout(s, dims),
    }
}

/// Packed length plus nothing: profiled values are not packed and count
/// separately toward k.
pub fn parameter_count(spec: &ModelSpec, dims: &DataDims) -> Result<usize> {
    Ok(layout(spec, dims)?.packed_len())
}

fn pack_segment(seg: &Segment, natural: &[f64], out: &mut Vec<f64>) -> Result<()> {
    if natural.len() != seg.n_natural {
        return Err(Error::constraint(
            &seg.name,
            format!("expected {} values, got {}", seg.n_natural, natural.len()),
        ));
    }
    for v in natural {
        if !v.is_finite() {
            return Err(Error::constraint(&seg.name, "value must be finite"));
        }
    }
    match seg.transform {
        Transform::Log => {
            for v in natural {
                if *v <= 0.0 {
                    return Err(Error::constraint(
                        &seg.name,
                        format!("must be positive to log-pack, got {v}"),
                    ));
                }
                out.push(v.ln());
            }
        }
        Transform::Identity => out.extend_from_slice(natural),
        Transform::SumToZero => {
            let total: f64 = natural.iter().sum();
            if total.abs() > SUM_TOL {
                return Err(Error::constraint(
                    &seg.name,
                    format!("must sum to zero, sums to {total:e}"),
                ));
            }
            out.extend_from_slice(&natural[..seg.n_natural - 1]);
        }
    }
    Ok(())
}

/// Natural values of one segment from its packed slice.
pub(crate) fn unpack_segment(seg: &Segment, packed: &[f64]) -> Vec<f64> {
    match seg.transform {
        Transform::Log => packed.iter().map(|v| v.exp()).collect(),
        Transform::Identity => packed.to_vec(),
        Transform::SumToZero => {
            let mut nat = packed.to_vec();
            nat.push(-packed.iter().sum::<f64>());
            nat
        }
    }
}

/// Map a gradient in natural space onto packed coordinates.
pub(crate) fn chain_segment(seg: &Segment, g_nat: &[f64], natural: &[f64], out: &mut Vec<f64>) {
    debug_assert_eq!(g_nat.len(), seg.n_natural);
    match seg.transform {
        Transform::Log => {
            for (g, v) in g_nat.iter().zip(natural) {
                out.push(g * v);
            }
        }
        Transform::Identity => out.extend_from_slice(g_nat),
        Transform::SumToZero => {
            let last = g_nat[seg.n_natural - 1];
            for g in &g_nat[..seg.n_natural - 1] {
                out.push(g - last);
            }
        }
    }
}

fn endemic_slice<'a>(endemic: &'a EndemicParams, kind: SegKind, scratch: &'a mut [f64; 1]) -> Result<&'a [f64]> {
    match (kind, endemic) {
        (SegKind::EndemicLevel, EndemicParams::FreePerTime(v)) => Ok(v),
        (SegKind::EndemicLevelRegion(r), EndemicParams::FreePerRegionTime(v)) => v
            .get(r)
            .map(|x| x.as_slice())
            .ok_or_else(|| Error::constraint("endemic.level", "missing region series")),
        (SegKind::EndemicMonth, EndemicParams::MonthSeasonal(v)) => Ok(v),
        (SegKind::HarmAlpha0, EndemicParams::Harmonic { alpha0, .. }) => {
            scratch[0] = *alpha0;
            Ok(&scratch[..])
        }
        (SegKind::HarmEta, EndemicParams::Harmonic { eta, .. }) => {
            scratch[0] = *eta;
            Ok(&scratch[..])
        }
        (SegKind::HarmGamma, EndemicParams::Harmonic { gamma, .. }) => {
            scratch[0] = *gamma;
            Ok(&scratch[..])
        }
        (SegKind::HarmDelta, EndemicParams::Harmonic { delta, .. }) => {
            scratch[0] = *delta;
            Ok(&scratch[..])
        }
        _ => Err(Error::constraint(
            "endemic",
            "parameter shape does not match the spec's endemic block",
        )),
    }
}

/// Pack natural parameters for a spec into a flat vector.
pub fn pack(spec: &ModelSpec, dims: &DataDims, params: &NaturalParams) -> Result<ParamVector> {
    let layout = layout(spec, dims)?;
    let mut out = Vec::with_capacity(layout.packed_len());
    match (spec, params) {
        (ModelSpec::Ee(_), NaturalParams::Ee(p)) => {
            for seg in layout.segments() {
                let mut scratch = [0.0];
                let natural: &[f64] = match seg.kind {
                    SegKind::Lambda => &p.lambda,
                    SegKind::Phi => &p.phi,
                    SegKind::RegionEffect => &p.region_effect,
                    SegKind::Psi => &p.psi,
                    _ => endemic_slice(&p.endemic, seg.kind, &mut scratch)?,
                };
                pack_segment(seg, natural, &mut out)?;
            }
        }
        (ModelSpec::Gravity(_), NaturalParams::Gravity(p)) => {
            for seg in layout.segments() {
                let mut scratch = [0.0];
                let natural: &[f64] = match seg.kind {
                    SegKind::Intercept => {
                        scratch[0] = p.intercept.ok_or_else(|| {
                            Error::constraint("intercept", "spec has an intercept but none given")
                        })?;
                        &scratch[..]
                    }
                    SegKind::RegionLoc => &p.region_loc,
                    SegKind::DistrictDev(r) => p.district_dev.get(r).map(|v| v.as_slice()).ok_or_else(
                        || Error::constraint(&seg.name, "missing district deviations for region"),
                    )?,
                    SegKind::Theta(r) => p
                        .theta
                        .get(r)
                        .map(|v| v.as_slice())
                        .ok_or_else(|| Error::constraint(&seg.name, "missing coefficients"))?,
                    SegKind::Psi => &p.psi,
                    _ => endemic_slice(&p.endemic, seg.kind, &mut scratch)?,
                };
                pack_segment(seg, natural, &mut out)?;
            }
        }
        _ => {
            return Err(Error::invalid(
                "parameter family does not match the model spec",
            ))
        }
    }
    Ok(ParamVector {
        values: out,
        layout,
    })
}

/// Rebuild natural parameters from a packed vector.
pub fn unpack(spec: &ModelSpec, dims: &DataDims, values: &[f64]) -> Result<NaturalParams> {
    let layout = layout(spec, dims)?;
    if values.len() != layout.packed_len() {
        return Err(Error::invalid(format!(
            "packed vector has {} entries, layout expects {}",
            values.len(),
            layout.packed_len()
        )));
    }
    match spec {
        ModelSpec::Ee(s) => {
            let mut p = EeParams {
                lambda: Vec::new(),
                phi: Vec::new(),
                endemic: EndemicParams::None,
                region_effect: Vec::new(),
                psi: Vec::new(),
            };
            let mut harmonic = [0.0f64; 4];
            let mut per_region: Vec<Vec<f64>> = Vec::new();
            for (i, seg) in layout.segments().iter().enumerate() {
                let off = layout.offset(i);
                let nat = unpack_segment(seg, &values[off..off + seg.packed_len()]);
                match seg.kind {
                    SegKind::Lambda => p.lambda = nat,
                    SegKind::Phi => p.phi = nat,
                    SegKind::EndemicLevel => p.endemic = EndemicParams::FreePerTime(nat),
                    SegKind::EndemicLevelRegion(_) => per_region.push(nat),
                    SegKind::EndemicMonth => p.endemic = EndemicParams::MonthSeasonal(nat),
                    SegKind::HarmAlpha0 => harmonic[0] = nat[0],
                    SegKind::HarmEta => harmonic[1] = nat[0],
                    SegKind::HarmGamma => harmonic[2] = nat[0],
                    SegKind::HarmDelta => harmonic[3] = nat[0],
                    SegKind::RegionEffect => p.region_effect = nat,
                    SegKind::Psi => p.psi = nat,
                    _ => unreachable!("gravity segment in autoregressive layout"),
                }
            }
            if matches!(s.endemic, EndemicKind::Harmonic { .. }) {
                p.endemic = EndemicParams::Harmonic {
                    alpha0: harmonic[0],
                    eta: harmonic[1],
                    gamma: harmonic[2],
                    delta: harmonic[3],
                };
            }
            if matches!(s.endemic, EndemicKind::FreePerRegionTime) {
                p.endemic = EndemicParams::FreePerRegionTime(per_region);
            }
            Ok(NaturalParams::Ee(p))
        }
        ModelSpec::Gravity(s) => {
            let mut p = GravityParams {
                intercept: None,
                endemic: EndemicParams::None,
                region_loc: Vec::new(),
                district_dev: Vec::new(),
                theta: Vec::new(),
                psi: Vec::new(),
            };
            let mut harmonic = [0.0f64; 3];
            let mut per_region: Vec<Vec<f64>> = Vec::new();
            for (i, seg) in layout.segments().iter().enumerate() {
                let off = layout.offset(i);
                let nat = unpack_segment(seg, &values[off..off + seg.packed_len()]);
                match seg.kind {
                    SegKind::Intercept => p.intercept = Some(nat[0]),
                    SegKind::EndemicLevel => p.endemic = EndemicParams::FreePerTime(nat),
                    SegKind::EndemicLevelRegion(_) => per_region.push(nat),
                    SegKind::EndemicMonth => p.endemic = EndemicParams::MonthSeasonal(nat),
                    SegKind::HarmEta => harmonic[0] = nat[0],
                    SegKind::HarmGamma => harmonic[1] = nat[0],
                    SegKind::HarmDelta => harmonic[2] = nat[0],
                    SegKind::RegionLoc => p.region_loc = nat,
                    SegKind::DistrictDev(_) => p.district_dev.push(nat),
                    SegKind::Theta(_) => p.theta.push(nat),
                    SegKind::Psi => p.psi = nat,
                    _ => unreachable!("autoregressive segment in gravity layout"),
                }
            }
            if matches!(s.endemic, EndemicKind::Harmonic { .. }) {
                p.endemic = EndemicParams::Harmonic {
                    alpha0: 0.0,
                    eta: harmonic[0],
                    gamma: harmonic[1],
                    delta: harmonic[2],
                };
            }
            if matches!(s.endemic, EndemicKind::FreePerRegionTime) {
                p.endemic = EndemicParams::FreePerRegionTime(per_region);
            }
            Ok(NaturalParams::Gravity(p))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        BetweenBlock, CouplingSpec, DispersionSpec, GravityTerm, GravityVariant, Profiled,
    };
    use crate::weights::{DecayKind, LagScheme};

    fn dims_toy() -> DataDims {
        DataDims {
            n_units: 7,
            n_regions: 3,
            n_times: 10,
            region_ids: vec!["a".into(), "b".into(), "c".into()],
            region_sizes: vec![2, 3, 2],
            airports_per_region: vec![1, 2, 1],
            n_airports: 4,
        }
    }

    fn ee_harmonic_spec() -> ModelSpec {
        ModelSpec::Ee(EeSpec {
            within: Some(CoefSharing::Shared),
            between: None,
            lags: crate::model::LagSpec {
                scheme: LagScheme::Single,
                max_lag: 1,
            },
            endemic: EndemicKind::Harmonic { omega: None },
            region_effect: None,
            dispersion: DispersionSpec::default(),
        })
    }

    fn gravity_toy_spec() -> ModelSpec {
        ModelSpec::Gravity(GravitySpec {
            variant: GravityVariant::CompositeSharedEndemic,
            intercept: true,
            effects: EffectsLevel::District,
            endemic: EndemicKind::FreePerTime,
            gravity: Some(GravityTerm {
                kernel: DecayKind::Exponential,
                alpha: Profiled::Profile,
                cross_region: false,
            }),
            dispersion: DispersionSpec::default(),
        })
    }

    #[test]
    fn ee_pack_maps_positive_coefficients_through_log() {
        let spec = ee_harmonic_spec();
        let dims = dims_toy();
        let params = NaturalParams::Ee(EeParams {
            lambda: vec![0.5],
            phi: vec![],
            endemic: EndemicParams::Harmonic {
                alpha0: 1.1,
                eta: 0.01,
                gamma: 0.5,
                delta: 0.2,
            },
            region_effect: vec![],
            psi: vec![1.0],
        });
        let packed = pack(&spec, &dims, &params).unwrap();
        assert_eq!(packed.values.len(), 6);
        assert!((packed.values[0] - 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(packed.values[1], 1.1);
        // psi = 1 packs to 0
        assert_eq!(packed.values[5], 0.0);
        let back = unpack(&spec, &dims, &packed.values).unwrap();
        match back {
            NaturalParams::Ee(p) => {
                assert!((p.lambda[0] - 0.5).abs() < 1e-14);
                assert!((p.psi[0] - 1.0).abs() < 1e-14);
            }
            _ => panic!("wrong family"),
        }
    }

    #[test]
    fn gravity_parameter_count_matches_hand_enumeration() {
        // intercept 1 + centered free endemic (10 - 1) + centered region
        // locations (3 - 1) + district deviations (1 + 2 + 1) + theta
        // (1 + 2 + 1) + shared psi 1 = 21.
        let n = parameter_count(&gravity_toy_spec(), &dims_toy()).unwrap();
        assert_eq!(n, 21);
    }

    #[test]
    fn gravity_cross_region_theta_spans_all_airports() {
        let mut spec = gravity_toy_spec();
        if let ModelSpec::Gravity(g) = &mut spec {
            g.gravity = Some(GravityTerm {
                kernel: DecayKind::Exponential,
                alpha: Profiled::Fixed(0.02),
                cross_region: true,
            });
        }
        // theta becomes 3 regions x 4 airports = 12 instead of 4.
        assert_eq!(parameter_count(&spec, &dims_toy()).unwrap(), 21 - 4 + 12);
    }

    #[test]
    fn intercept_does_not_change_parameter_count() {
        let spec = gravity_toy_spec();
        let mut without = spec.clone();
        if let ModelSpec::Gravity(g) = &mut without {
            g.intercept = false;
        }
        let dims = dims_toy();
        assert_eq!(
            parameter_count(&spec, &dims).unwrap(),
            parameter_count(&without, &dims).unwrap()
        );
    }

    #[test]
    fn sum_to_zero_violation_names_the_segment() {
        let spec = gravity_toy_spec();
        let dims = dims_toy();
        let params = NaturalParams::Gravity(GravityParams {
            intercept: Some(1.0),
            endemic: EndemicParams::FreePerTime(vec![0.1; 10]),
            region_loc: vec![0.0, 0.0, 0.0],
            district_dev: vec![vec![0.0; 2], vec![0.0; 3], vec![0.0; 2]],
            theta: vec![vec![0.0], vec![0.0, 0.0], vec![0.0]],
            psi: vec![0.5],
        });
        match pack(&spec, &dims, &params) {
            Err(Error::Constraint { name, .. }) => assert_eq!(name, "endemic.level"),
            other => panic!("expected constraint error, got {other:?}"),
        }
    }

    #[test]
    fn log_pack_rejects_nonpositive_values() {
        let spec = ee_harmonic_spec();
        let dims = dims_toy();
        let params = NaturalParams::Ee(EeParams {
            lambda: vec![0.0],
            phi: vec![],
            endemic: EndemicParams::Harmonic {
                alpha0: 0.0,
                eta: 0.0,
                gamma: 0.0,
                delta: 0.0,
            },
            region_effect: vec![],
            psi: vec![0.1],
        });
        match pack(&spec, &dims, &params) {
            Err(Error::Constraint { name, .. }) => assert_eq!(name, "lambda"),
            other => panic!("expected constraint error, got {other:?}"),
        }
    }

    #[test]
    fn packed_round_trip_is_identity() {
        let spec = ModelSpec::Ee(EeSpec {
            within: Some(CoefSharing::PerUnit),
            between: Some(BetweenBlock {
                sharing: CoefSharing::Shared,
                coupling: CouplingSpec::PowerLaw {
                    rho: Profiled::Fixed(-1.0),
                },
            }),
            lags: crate::model::LagSpec {
                scheme: LagScheme::Geometric { p: 0.5 },
                max_lag: 3,
            },
            endemic: EndemicKind::FreePerRegionTime,
            region_effect: Some(RegionEffect::PerRegion),
            dispersion: DispersionSpec {
                sharing: DispersionSharing::PerUnit,
            },
        });
        let dims = dims_toy();
        let lay = layout(&spec, &dims).unwrap();
        let packed: Vec<f64> = (0..lay.packed_len()).map(|i| (i as f64) * 0.07 - 1.0).collect();
        let nat = unpack(&spec, &dims, &packed).unwrap();
        let repacked = pack(&spec, &dims, &nat).unwrap();
        for (a, b) in packed.iter().zip(&repacked.values) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn layout_names_are_addressable() {
        let lay = layout(&gravity_toy_spec(), &dims_toy()).unwrap();
        let (seg, off) = lay.find("theta.b").unwrap();
        assert_eq!(seg.n_natural, 2);
        assert!(off > 0);
        assert!(lay.find("nope").is_none());
    }
}
