//! The three-layer colonization model.
//!
//! A primary tumor grows radially until it touches the nearest vessel, then
//! sheds cells into the bloodstream at rate `d` until the stop time `T`.
//! Shed cells travel along vessel paths and decay exponentially with path
//! length; paths at least `nu` long carry nothing, where `nu` is the length
//! at which a cohort of `N0` cells drops below the extinction threshold
//! `xi`. Arriving cells settle into colonizable tissue with probability
//! `p_settle`.
//!
//! Each layer sits behind a trait so a richer growth, transport or
//! settlement model can replace the default.

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::keyed_rng;
use crate::vessel_graph::{paths_within, VesselGraph};
use crate::volume::{Volume3D, VolumeKind};
use crate::Vec3;

/// Biophysical constants. Lengths in mm, times in days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationParams {
    /// Shedding rate into the bloodstream, cells/day.
    pub d: f64,
    /// Extinction threshold, cells.
    pub xi: f64,
    /// In-stream decay per unit path length, 1/mm.
    pub lambda_len: f64,
    /// Probability that an arriving cell settles.
    pub p_settle: f64,
    /// Radial tumor growth speed, mm/day.
    pub g: f64,
    /// Stop time, days.
    #[serde(rename = "T")]
    pub t_stop: f64,
    /// Reference cohort size used to derive the path bound, cells.
    #[serde(rename = "N0")]
    pub n0: f64,
    /// Initial graph search radius, mm.
    #[serde(rename = "R_0")]
    pub r0: f64,
    /// Search radius increment, mm.
    pub delta_r: f64,
    /// Evaluate transport on the maximum spanning tree instead of the full graph.
    pub use_spanning_tree: bool,
    /// Rescale vessel axes to unit direction before computing endpoints.
    pub normalize_axis: bool,
    /// Draw Poisson counts instead of expected values.
    pub stochastic: bool,
    pub seed: u64,
}

impl Default for SimulationParams {
    fn default() -> Self {
        SimulationParams {
            d: 100.0,
            xi: 1e3,
            lambda_len: 0.05,
            p_settle: 0.05,
            g: 0.5,
            t_stop: 60.0,
            n0: 1e6,
            r0: 1.0,
            delta_r: 0.5,
            use_spanning_tree: true,
            normalize_axis: false,
            stochastic: false,
            seed: 0,
        }
    }
}

impl SimulationParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d", self.d),
            ("xi", self.xi),
            ("lambda_len", self.lambda_len),
            ("g", self.g),
            ("T", self.t_stop),
            ("N0", self.n0),
            ("R_0", self.r0),
            ("delta_R", self.delta_r),
        ];
        for (name, v) in positive {
            if v.is_nan() || v <= 0.0 {
                return Err(Error::InvalidParams(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.p_settle) {
            return Err(Error::InvalidParams(format!(
                "p_settle must lie in [0, 1], got {}",
                self.p_settle
            )));
        }
        if self.xi >= self.n0 {
            return Err(Error::InvalidParams(format!(
                "xi ({}) must be below N0 ({})",
                self.xi, self.n0
            )));
        }
        Ok(())
    }

    /// Hex SHA-256 over the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("params serialize");
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TumorSpec {
    /// Tumor center, mm.
    pub location: Vec3,
    /// Tumor radius, mm.
    pub radius: f64,
}

impl TumorSpec {
    pub fn validate(&self, volume: &Volume3D) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "tumor radius must be positive, got {}",
                self.radius
            )));
        }
        if !volume.contains(self.location) {
            return Err(Error::OutsideVolume(self.location));
        }
        Ok(())
    }
}

/// Tumor growth up to vessel contact.
pub trait GrowthModel: Send + Sync {
    /// Days until a tumor whose surface is `gap` mm from a vessel wall touches it.
    fn time_to_contact(&self, gap: f64, p: &SimulationParams) -> f64;
}

/// In-stream survival along a path.
pub trait TransportModel: Send + Sync {
    /// Fraction of shed cells still viable after `length` mm.
    fn surviving_fraction(&self, length: f64, p: &SimulationParams) -> f64;
}

/// Extravasation and establishment.
pub trait ColonizationModel: Send + Sync {
    /// Expected settled cells given expected arrivals.
    fn settled(&self, arrivals: f64, p: &SimulationParams) -> f64;
}

/// Constant-speed radial growth.
#[derive(Debug, Clone, Copy, Default)]
pub struct RadialGrowth;

impl GrowthModel for RadialGrowth {
    fn time_to_contact(&self, gap: f64, p: &SimulationParams) -> f64 {
        (gap / p.g).max(0.0)
    }
}

/// `exp(-lambda_len * L)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExponentialDecay;

impl TransportModel for ExponentialDecay {
    fn surviving_fraction(&self, length: f64, p: &SimulationParams) -> f64 {
        (-p.lambda_len * length).exp()
    }
}

/// Each arrival settles independently with probability `p_settle`.
#[derive(Debug, Clone, Copy, Default)]
pub struct BernoulliSettlement;

impl ColonizationModel for BernoulliSettlement {
    fn settled(&self, arrivals: f64, p: &SimulationParams) -> f64 {
        arrivals * p.p_settle
    }
}

/// Path bound `nu = ln(N0 / xi) / lambda_len`; zero when `xi >= N0`.
pub fn nu_from_decay(p: &SimulationParams) -> f64 {
    if p.xi >= p.n0 {
        return 0.0;
    }
    (p.n0 / p.xi).ln() / p.lambda_len
}

/// Days until the tumor touches its nearest vessel.
pub fn time_to_vessel(tumor: &TumorSpec, graph: &VesselGraph, p: &SimulationParams) -> Result<f64> {
    let (_, distance) = graph.nearest_vessel(tumor.location)?;
    Ok(RadialGrowth.time_to_contact(distance - tumor.radius, p))
}

/// Surviving fraction summed over every admissible path from `s` to `t`, capped at 1.
pub fn transported_fraction(
    graph: &VesselGraph,
    s: usize,
    t: usize,
    p: &SimulationParams,
) -> Result<f64> {
    transported_fraction_with(&ExponentialDecay, graph, s, t, p)
}

fn transported_fraction_with(
    transport: &dyn TransportModel,
    graph: &VesselGraph,
    s: usize,
    t: usize,
    p: &SimulationParams,
) -> Result<f64> {
    let nu = nu_from_decay(p);
    let total: f64 = paths_within(graph, s, t, nu)?
        .iter()
        .map(|path| transport.surviving_fraction(path.length, p))
        .sum();
    Ok(total.min(1.0))
}

/// Model state that depends only on the tumor: source vessel, contact time
/// and the transported fraction to every vessel.
pub struct Model<'a> {
    graph: &'a VesselGraph,
    params: &'a SimulationParams,
    colonization: Box<dyn ColonizationModel>,
    source: usize,
    t_reach: f64,
    fractions: Vec<f64>,
}

impl<'a> Model<'a> {
    pub fn new(
        graph: &'a VesselGraph,
        tumor: &TumorSpec,
        params: &'a SimulationParams,
    ) -> Result<Self> {
        Self::with_strategies(
            graph,
            tumor,
            params,
            &RadialGrowth,
            &ExponentialDecay,
            Box::new(BernoulliSettlement),
        )
    }

    pub fn with_strategies(
        graph: &'a VesselGraph,
        tumor: &TumorSpec,
        params: &'a SimulationParams,
        growth: &dyn GrowthModel,
        transport: &dyn TransportModel,
        colonization: Box<dyn ColonizationModel>,
    ) -> Result<Self> {
        let (source, distance) = graph.nearest_vessel(tumor.location)?;
        let t_reach = growth.time_to_contact(distance - tumor.radius, params);
        let fractions = (0..graph.len())
            .map(|t| transported_fraction_with(transport, graph, source, t, params))
            .collect::<Result<Vec<_>>>()?;
        Ok(Model {
            graph,
            params,
            colonization,
            source,
            t_reach,
            fractions,
        })
    }

    /// Vessel nearest the primary tumor.
    pub fn source_vessel(&self) -> usize {
        self.source
    }

    pub fn time_to_vessel(&self) -> f64 {
        self.t_reach
    }

    pub fn fraction_to(&self, vessel: usize) -> f64 {
        self.fractions[vessel]
    }

    /// Expected number of cells settling at `tau`.
    pub fn expected_cells(&self, tissue: &Volume3D, tau: Vec3) -> Result<f64> {
        if tissue.kind() != VolumeKind::Binary {
            return Err(Error::InvalidVolume("tissue volume must be binary".into()));
        }
        if tissue.sample(tau)? == 0.0 {
            return Ok(0.0);
        }
        let window = (self.params.t_stop - self.t_reach).max(0.0);
        if window == 0.0 {
            return Ok(0.0);
        }
        let (target, _) = self.graph.nearest_vessel(tau)?;
        let arrivals = self.params.d * window * self.fractions[target];
        Ok(self.colonization.settled(arrivals, self.params))
    }

    /// Poisson draw around [`Model::expected_cells`] from the stream keyed by `key`.
    pub fn sampled_cells(&self, tissue: &Volume3D, tau: Vec3, key: u64) -> Result<f64> {
        let mean = self.expected_cells(tissue, tau)?;
        Ok(poisson_draw(mean, self.params.seed, key))
    }

    /// Expected or sampled count depending on `params.stochastic`.
    pub fn evaluate(&self, tissue: &Volume3D, tau: Vec3, key: u64) -> Result<f64> {
        if self.params.stochastic {
            self.sampled_cells(tissue, tau, key)
        } else {
            self.expected_cells(tissue, tau)
        }
    }
}

fn poisson_draw(mean: f64, seed: u64, key: u64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    let mut rng = keyed_rng(seed, key);
    Poisson::new(mean)
        .expect("finite positive mean")
        .sample(&mut rng)
}

/// Expected cells settling at `tau` (single evaluation of the full model).
pub fn model_m(
    graph: &VesselGraph,
    tumor: &TumorSpec,
    tissue: &Volume3D,
    tau: Vec3,
    p: &SimulationParams,
) -> Result<f64> {
    Model::new(graph, tumor, p)?.expected_cells(tissue, tau)
}
