//! Synthetic lung phantoms with known vessels, lungs, tumor and metastases.

pub mod oracle;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::biophysics::{SimulationParams, TumorSpec};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, keyed_rng};
use crate::vessel_graph::{build_graph, max_spanning_tree, point_segment_distance, Vessel};
use crate::volume::{Volume3D, VolumeKind};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ellipsoid {
    pub center: Vec3,
    pub semi_axes: Vec3,
}

impl Ellipsoid {
    pub fn contains(&self, p: Vec3) -> bool {
        let s: f64 = (0..3)
            .map(|a| ((p[a] - self.center[a]) / self.semi_axes[a]).powi(2))
            .sum();
        s <= 1.0
    }
}

/// Recursive bifurcation parameters. Generation `g` vessels have radius
/// `root_radius * radius_decay^g` and length `root_length * length_decay^g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VesselTreeSpec {
    pub branching: usize,
    pub depth: usize,
    pub root_radius: f64,
    pub radius_decay: f64,
    pub root_start: Vec3,
    pub root_direction: Vec3,
    pub root_length: f64,
    pub length_decay: f64,
    /// Half-width of the fan of child directions in the xy plane, radians.
    pub branch_angle: f64,
    /// Uniform jitter added to each child's xy angle, radians.
    pub angle_jitter: f64,
    /// Uniform jitter added to each child's z slope.
    pub tilt_jitter: f64,
}

impl Default for VesselTreeSpec {
    fn default() -> Self {
        VesselTreeSpec {
            branching: 2,
            depth: 3,
            root_radius: 2.0,
            radius_decay: 0.75,
            root_start: [32.0, 4.0, 32.0],
            root_direction: [0.0, 1.0, 0.0],
            root_length: 12.0,
            length_decay: 0.8,
            branch_angle: 0.6,
            angle_jitter: 0.1,
            tilt_jitter: 0.15,
        }
    }
}

/// Phantom contrast levels (arbitrary units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Intensities {
    pub background: f64,
    /// Amplitude of the smooth background modulation.
    pub background_variation: f64,
    pub lung: f64,
    pub vessel: f64,
    pub tumor: f64,
}

impl Default for Intensities {
    fn default() -> Self {
        Intensities {
            background: 0.45,
            background_variation: 0.05,
            lung: 0.1,
            vessel: 1.0,
            tumor: 0.9,
        }
    }
}

/// How ground-truth metastases are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetastasisSpec {
    /// Blob radius, mm.
    pub blob_radius: f64,
    /// Metastasis voxels lie within this distance of some vessel axis, mm.
    pub max_vessel_distance: f64,
}

impl Default for MetastasisSpec {
    fn default() -> Self {
        MetastasisSpec {
            blob_radius: 2.0,
            max_vessel_distance: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: Vec3,
    pub lung_ellipsoids: [Ellipsoid; 2],
    pub vessel_tree: VesselTreeSpec,
    pub tumor: TumorSpec,
    pub noise_sigma: f64,
    pub seed: u64,
    pub intensities: Intensities,
    pub metastasis: MetastasisSpec,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            dims: [64, 64, 64],
            spacing: [1.0; 3],
            lung_ellipsoids: [
                Ellipsoid {
                    center: [20.0, 32.0, 32.0],
                    semi_axes: [11.0, 22.0, 26.0],
                },
                Ellipsoid {
                    center: [44.0, 32.0, 32.0],
                    semi_axes: [11.0, 22.0, 26.0],
                },
            ],
            vessel_tree: VesselTreeSpec::default(),
            tumor: TumorSpec {
                location: [16.0, 36.0, 34.0],
                radius: 2.5,
            },
            noise_sigma: 0.02,
            seed: 42,
            intensities: Intensities::default(),
            metastasis: MetastasisSpec::default(),
        }
    }
}

impl PhantomSpec {
    /// Same physical layout sampled on an `n`-voxel cube.
    pub fn resampled(&self, n: usize) -> PhantomSpec {
        let mut s = self.clone();
        for a in 0..3 {
            s.spacing[a] = self.spacing[a] * self.dims[a] as f64 / n as f64;
        }
        s.dims = [n; 3];
        s
    }

    pub fn extent(&self) -> Vec3 {
        [
            self.dims[0] as f64 * self.spacing[0],
            self.dims[1] as f64 * self.spacing[1],
            self.dims[2] as f64 * self.spacing[2],
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidPhantom(m));
        if self.dims.contains(&0) {
            return bad(format!("dims must be positive, got {:?}", self.dims));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return bad(format!("spacing must be positive, got {:?}", self.spacing));
        }
        for e in &self.lung_ellipsoids {
            if e.semi_axes.iter().any(|&s| !(s > 0.0 && s.is_finite()))
                || e.center.iter().any(|c| !c.is_finite())
            {
                return bad(format!("invalid lung ellipsoid {e:?}"));
            }
        }
        let t = &self.vessel_tree;
        if t.branching == 0 {
            return bad("branching factor must be at least 1".into());
        }
        if !(t.root_radius > 0.0 && t.root_radius.is_finite()) {
            return bad(format!(
                "root radius must be positive, got {}",
                t.root_radius
            ));
        }
        if !(t.radius_decay > 0.0 && t.radius_decay <= 1.0) {
            return bad(format!(
                "radius decay must be in (0, 1], got {}",
                t.radius_decay
            ));
        }
        if !(t.root_length > 0.0
            && t.length_decay > 0.0
            && t.root_length.is_finite()
            && t.length_decay.is_finite())
        {
            return bad("vessel lengths must be positive".into());
        }
        if t.root_direction[0] == 0.0 && t.root_direction[1] == 0.0 {
            return bad("root direction needs an xy component".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            ));
        }
        if self.tumor.radius.is_nan() || self.tumor.radius <= 0.0 {
            return bad(format!(
                "tumor radius must be positive, got {}",
                self.tumor.radius
            ));
        }
        if !self
            .lung_ellipsoids
            .iter()
            .any(|e| e.contains(self.tumor.location))
        {
            return bad(format!(
                "tumor at {:?} is outside both lungs",
                self.tumor.location
            ));
        }
        let m = &self.metastasis;
        if !(m.blob_radius >= 0.0 && m.max_vessel_distance >= 0.0) {
            return bad("metastasis radii must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub vessels: Vec<Vessel>,
    pub lung_mask: Volume3D,
    pub tumor: TumorSpec,
    pub metastasis_mask: Volume3D,
    pub metastasis: MetastasisSpec,
}

/// Grows the vessel tree breadth-first; children start at the parent's end.
pub fn grow_vessel_tree(spec: &PhantomSpec) -> Result<Vec<Vessel>> {
    let t = &spec.vessel_tree;
    let mut rng = keyed_rng(derive_seed(spec.seed, "vessel-tree"), 0);
    let extent = spec.extent();
    let root_dir = unit(clamp_tilt(t.root_direction));

    // (start, unit direction) of every vessel in the current generation
    let mut generation = vec![(t.root_start, root_dir)];
    let mut vessels = Vec::new();
    for g in 0..=t.depth {
        let length = t.root_length * t.length_decay.powi(g as i32);
        let radius = t.root_radius * t.radius_decay.powi(g as i32);
        let mut next = Vec::with_capacity(generation.len() * t.branching);
        for &(start, dir) in &generation {
            let end = [
                start[0] + length * dir[0],
                start[1] + length * dir[1],
                start[2] + length * dir[2],
            ];
            for p in [start, end] {
                if (0..3).any(|a| !(p[a] >= 0.0 && p[a] <= extent[a])) {
                    return Err(Error::InvalidPhantom(format!(
                        "vessel tree of depth {} leaves the {:?} mm volume at {p:?}",
                        t.depth, extent
                    )));
                }
            }
            let v = Vessel::from_endpoints(start, end, radius).ok_or_else(|| {
                Error::InvalidPhantom(format!("vessel {start:?} -> {end:?} too steep"))
            })?;
            vessels.push(v);
            if g == t.depth {
                continue;
            }
            let heading = dir[1].atan2(dir[0]);
            let slope = dir[2] / dir[0].hypot(dir[1]);
            for m in 0..t.branching {
                let fan = if t.branching == 1 {
                    0.0
                } else {
                    t.branch_angle * (2.0 * m as f64 / (t.branching - 1) as f64 - 1.0)
                };
                let angle = heading + fan + t.angle_jitter * rng.random_range(-1.0..=1.0);
                let tilt = slope + t.tilt_jitter * rng.random_range(-1.0..=1.0);
                let child = unit(clamp_tilt([angle.cos(), angle.sin(), tilt]));
                next.push((end, child));
            }
        }
        generation = next;
    }
    Ok(vessels)
}

// keeps |dz| <= |dxy| / 2 so the segment stays representable by a vessel
fn clamp_tilt(d: Vec3) -> Vec3 {
    let xy = d[0].hypot(d[1]);
    [d[0], d[1], d[2].clamp(-0.5 * xy, 0.5 * xy)]
}

fn unit(d: Vec3) -> Vec3 {
    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    [d[0] / n, d[1] / n, d[2] / n]
}

/// Renders the scalar phantom and its ground truth (no metastases yet).
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(Volume3D, GroundTruth)> {
    spec.validate()?;
    let vessels = grow_vessel_tree(spec)?;
    let axes: Vec<(Vec3, Vec3, f64)> = vessels
        .iter()
        .map(|v| {
            let (a, b) = v.endpoints();
            (a, b, v.r)
        })
        .collect();
    let dims = spec.dims;
    let extent = spec.extent();
    let lung_mask = Volume3D::from_fn(dims, spec.spacing, VolumeKind::Binary, |i, j, k| {
        let p = center(spec, i, j, k);
        spec.lung_ellipsoids.iter().any(|e| e.contains(p)) as u8 as f64
    })?;

    let iv = spec.intensities;
    let noise_seed = derive_seed(spec.seed, "noise");
    let noise = if spec.noise_sigma > 0.0 {
        Some(Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidPhantom(e.to_string()))?)
    } else {
        None
    };
    let tumor = spec.tumor;
    let data: Vec<f64> = (0..lung_mask.len())
        .into_par_iter()
        .map(|n| {
            let [i, j, k] = lung_mask.coords(n);
            let p = center(spec, i, j, k);
            let tau = std::f64::consts::TAU;
            let mut value = iv.background
                + iv.background_variation
                    * (tau * p[0] / extent[0]).sin()
                    * (tau * p[1] / extent[1]).cos();
            if lung_mask.data()[n] == 1.0 {
                value = iv.lung;
            }
            if axes
                .iter()
                .any(|&(a, b, r)| point_segment_distance(p, a, b) <= r)
            {
                value = iv.vessel;
            }
            let dt = [
                p[0] - tumor.location[0],
                p[1] - tumor.location[1],
                p[2] - tumor.location[2],
            ];
            if (dt[0] * dt[0] + dt[1] * dt[1] + dt[2] * dt[2]).sqrt() <= tumor.radius {
                value = iv.tumor;
            }
            if let Some(dist) = noise {
                value += dist.sample(&mut keyed_rng(noise_seed, n as u64));
            }
            value
        })
        .collect();
    let volume = Volume3D::new(dims, spec.spacing, data, VolumeKind::Scalar)?;
    let gt = GroundTruth {
        vessels,
        metastasis_mask: Volume3D::zeros(dims, spec.spacing, VolumeKind::Binary)?,
        lung_mask,
        tumor,
        metastasis: spec.metastasis,
    };
    Ok((volume, gt))
}

fn center(spec: &PhantomSpec, i: usize, j: usize, k: usize) -> Vec3 {
    [
        (i as f64 + 0.5) * spec.spacing[0],
        (j as f64 + 0.5) * spec.spacing[1],
        (k as f64 + 0.5) * spec.spacing[2],
    ]
}

/// Places `n` metastasis blobs at distinct sites drawn without replacement
/// with probability proportional to the dense oracle evaluation of the
/// model on the ground-truth lungs.
///
/// Candidate sites are lung voxels with positive oracle mass that lie within
/// `max_vessel_distance` of a vessel axis. Each blob is the set of such
/// near-vessel lung voxels within `blob_radius` of its site.
pub fn plant_metastases(
    gt: &GroundTruth,
    params: &SimulationParams,
    n: usize,
    seed: u64,
) -> Result<Volume3D> {
    let lungs = &gt.lung_mask;
    let mut mask = Volume3D::zeros(lungs.dims(), lungs.spacing(), VolumeKind::Binary)?.into_data();
    if n == 0 {
        return Volume3D::new(lungs.dims(), lungs.spacing(), mask, VolumeKind::Binary);
    }
    params.validate()?;
    let graph = build_graph(
        gt.vessels.clone(),
        params.r0,
        params.delta_r,
        params.normalize_axis,
    )?;
    let graph = if params.use_spanning_tree {
        max_spanning_tree(&graph)?
    } else {
        graph
    };
    let field = oracle::dense_model_field(&graph, &gt.tumor, lungs, params);

    let axes: Vec<(Vec3, Vec3)> = gt.vessels.iter().map(|v| v.endpoints()).collect();
    let reach = gt.metastasis.max_vessel_distance;
    let near_vessel = |p: Vec3| {
        axes.iter()
            .any(|&(a, b)| point_segment_distance(p, a, b) <= reach)
    };
    let eligible = |idx: usize| {
        let [i, j, k] = lungs.coords(idx);
        lungs.data()[idx] == 1.0 && near_vessel(lungs.voxel_center(i, j, k))
    };
    let mut candidates: Vec<(usize, f64)> = (0..field.len())
        .filter(|&idx| field[idx] > 0.0 && eligible(idx))
        .map(|idx| (idx, field[idx]))
        .collect();
    if n > candidates.len() {
        return Err(Error::InvalidPhantom(format!(
            "cannot plant {n} metastases: only {} colonizable voxels",
            candidates.len()
        )));
    }

    let mut rng = keyed_rng(derive_seed(seed, "plant"), 0);
    let mut sites = Vec::with_capacity(n);
    for _ in 0..n {
        let total: f64 = candidates.iter().map(|c| c.1).sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = candidates.len() - 1;
        for (m, c) in candidates.iter().enumerate() {
            if u < c.1 {
                pick = m;
                break;
            }
            u -= c.1;
        }
        sites.push(candidates.remove(pick).0);
    }
    log::debug!("planted metastasis sites {sites:?}");

    let radius = gt.metastasis.blob_radius;
    for &site in &sites {
        let [si, sj, sk] = lungs.coords(site);
        let c = lungs.voxel_center(si, sj, sk);
        let sp = lungs.spacing();
        let lo = |a: usize, s: usize| s.saturating_sub((radius / sp[a]).ceil() as usize);
        let hi =
            |a: usize, s: usize| (s + (radius / sp[a]).ceil() as usize).min(lungs.dims()[a] - 1);
        for k in lo(2, sk)..=hi(2, sk) {
            for j in lo(1, sj)..=hi(1, sj) {
                for i in lo(0, si)..=hi(0, si) {
                    let p = lungs.voxel_center(i, j, k);
                    let d = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2))
                        .sqrt();
                    let idx = lungs.index(i, j, k);
                    if d <= radius && eligible(idx) {
                        mask[idx] = 1.0;
                    }
                }
            }
        }
    }
    Volume3D::new(lungs.dims(), lungs.spacing(), mask, VolumeKind::Binary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vessel_graph::dist;

    #[test]
    fn default_tree_has_fifteen_vessels() {
        let (_, gt) = generate_phantom(&PhantomSpec::default()).unwrap();
        assert_eq!(gt.vessels.len(), 1 + 2 + 4 + 8);
    }

    #[test]
    fn depth_zero_is_root_only() {
        let mut s = PhantomSpec::default();
        s.vessel_tree.depth = 0;
        assert_eq!(grow_vessel_tree(&s).unwrap().len(), 1);
    }

    #[test]
    fn ternary_tree_count() {
        let mut s = PhantomSpec::default();
        s.vessel_tree.branching = 3;
        s.vessel_tree.depth = 2;
        assert_eq!(grow_vessel_tree(&s).unwrap().len(), 1 + 3 + 9);
    }

    #[test]
    fn radii_non_increasing_and_tree_connected_by_shared_endpoints() {
        let vs = grow_vessel_tree(&PhantomSpec::default()).unwrap();
        assert!(vs.iter().all(|v| v.r > 0.0));
        let mut uf = crate::vessel_graph::UnionFind::new(vs.len());
        for (i, a) in vs.iter().enumerate() {
            for (j, b) in vs.iter().enumerate() {
                if dist(a.endpoints().1, b.endpoints().0) < 1e-9 {
                    assert!(b.r <= a.r);
                    uf.union(i, j);
                }
            }
        }
        let root = uf.find(0);
        assert!((0..vs.len()).all(|i| uf.find(i) == root));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let s = PhantomSpec::default().resampled(24);
        let (a, _) = generate_phantom(&s).unwrap();
        let (b, _) = generate_phantom(&s).unwrap();
        assert_eq!(a.raw_bytes(), b.raw_bytes());
        let mut other = s.clone();
        other.seed = 7;
        assert_ne!(generate_phantom(&other).unwrap().0.data(), a.data());
    }

    #[test]
    fn vessels_brighter_than_background() {
        let s = PhantomSpec::default();
        let (vol, gt) = generate_phantom(&s).unwrap();
        let axes: Vec<_> = gt.vessels.iter().map(|v| (v.endpoints(), v.r)).collect();
        let (mut vin, mut nin, mut bg, mut nbg) = (0.0, 0, 0.0, 0);
        for n in 0..vol.len() {
            let [i, j, k] = vol.coords(n);
            let p = vol.voxel_center(i, j, k);
            if axes
                .iter()
                .any(|&((a, b), r)| point_segment_distance(p, a, b) <= r)
            {
                vin += vol.data()[n];
                nin += 1;
            } else if gt.lung_mask.data()[n] == 0.0 {
                bg += vol.data()[n];
                nbg += 1;
            }
        }
        assert!(nin > 0);
        assert!(vin / nin as f64 > bg / nbg as f64 + 3.0 * s.noise_sigma);
    }

    #[test]
    fn tumor_outside_lungs_rejected() {
        let mut s = PhantomSpec::default();
        s.tumor.location = [32.0, 60.0, 2.0];
        assert!(matches!(
            generate_phantom(&s),
            Err(Error::InvalidPhantom(_))
        ));
    }

    #[test]
    fn tree_too_deep_for_volume_rejected() {
        let mut s = PhantomSpec::default();
        s.vessel_tree.depth = 6;
        s.vessel_tree.length_decay = 1.0;
        assert!(matches!(
            generate_phantom(&s),
            Err(Error::InvalidPhantom(_))
        ));
    }

    #[test]
    fn growing_radius_rejected() {
        let mut s = PhantomSpec::default();
        s.vessel_tree.radius_decay = 1.2;
        assert!(s.validate().is_err());
    }

    #[test]
    fn plant_zero_is_empty() {
        let (_, gt) = generate_phantom(&PhantomSpec::default().resampled(16)).unwrap();
        let m = plant_metastases(&gt, &SimulationParams::default(), 0, 1).unwrap();
        assert_eq!(m.count_nonzero(), 0);
    }

    #[test]
    fn plant_is_deterministic_and_inside_lungs() {
        let (_, gt) = generate_phantom(&PhantomSpec::default().resampled(32)).unwrap();
        let p = SimulationParams::default();
        let a = plant_metastases(&gt, &p, 5, 9).unwrap();
        let b = plant_metastases(&gt, &p, 5, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.count_nonzero() > 0);
        for n in 0..a.len() {
            if a.data()[n] == 1.0 {
                assert_eq!(gt.lung_mask.data()[n], 1.0);
            }
        }
    }

    #[test]
    fn plant_single_site_when_mass_is_concentrated() {
        let (_, mut gt) = generate_phantom(&PhantomSpec::default().resampled(16)).unwrap();
        // keep one colonizable voxel next to the tumor's vessel tree
        let near = gt.vessels[0].endpoints().1;
        let site = gt.lung_mask.voxel_at(near).unwrap();
        let site_idx = gt.lung_mask.index(site[0], site[1], site[2]);
        let mut lung = vec![0.0; gt.lung_mask.len()];
        lung[site_idx] = 1.0;
        gt.lung_mask = Volume3D::new(
            gt.lung_mask.dims(),
            gt.lung_mask.spacing(),
            lung,
            VolumeKind::Binary,
        )
        .unwrap();
        let m = plant_metastases(&gt, &SimulationParams::default(), 1, 3).unwrap();
        assert_eq!(m.count_nonzero(), 1);
        assert_eq!(m.data()[site_idx], 1.0);
        assert!(plant_metastases(&gt, &SimulationParams::default(), 2, 3).is_err());
    }
}
