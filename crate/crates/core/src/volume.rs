//! Voxel grids, raw-volume file I/O, slice rendering and grid sampling.
//!
//! Volumes are stored x-fastest: the voxel `(i, j, k)` lives at
//! `i + x * (j + y * k)`. Voxel `i` along an axis with spacing `s` covers
//! `[i * s, (i + 1) * s)` millimeters, so its center is at `(i + 0.5) * s`.

use std::fs;
use std::path::{Path, PathBuf};

use image::GrayImage;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::Vec3;

/// Tolerance on the total mass of a probability volume.
pub const PROBABILITY_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeKind {
    Scalar,
    Binary,
    Probability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(format!("unknown axis '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    dims: [usize; 3],
    spacing: Vec3,
    data: Vec<f64>,
    kind: VolumeKind,
}

impl Volume3D {
    pub fn new(dims: [usize; 3], spacing: Vec3, data: Vec<f64>, kind: VolumeKind) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidVolume(format!(
                "dims must be positive, got {dims:?}"
            )));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::InvalidVolume(format!(
                "spacing must be positive and finite, got {spacing:?}"
            )));
        }
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                dims,
                expected,
                actual: data.len(),
            });
        }
        let v = Volume3D {
            dims,
            spacing,
            data,
            kind,
        };
        v.validate_values()?;
        Ok(v)
    }

    pub fn zeros(dims: [usize; 3], spacing: Vec3, kind: VolumeKind) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(dims, spacing, vec![0.0; n], kind)
    }

    /// Builds a volume by evaluating `f(i, j, k)` in storage order.
    pub fn from_fn(
        dims: [usize; 3],
        spacing: Vec3,
        kind: VolumeKind,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.iter().product());
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    data.push(f(i, j, k));
                }
            }
        }
        Self::new(dims, spacing, data, kind)
    }

    fn validate_values(&self) -> Result<()> {
        if let Some(bad) = self.data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidVolume(format!("non-finite value {bad}")));
        }
        match self.kind {
            VolumeKind::Scalar => Ok(()),
            VolumeKind::Binary => match self.data.iter().find(|&&v| v != 0.0 && v != 1.0) {
                Some(bad) => Err(Error::InvalidVolume(format!(
                    "binary volume contains non-binary value {bad}"
                ))),
                None => Ok(()),
            },
            VolumeKind::Probability => {
                if let Some(bad) = self.data.iter().find(|&&v| !(0.0..=1.0).contains(&v)) {
                    return Err(Error::InvalidVolume(format!(
                        "probability volume contains value {bad} outside [0, 1]"
                    )));
                }
                let sum = self.sum();
                if sum != 0.0 && (sum - 1.0).abs() > PROBABILITY_SUM_TOL {
                    return Err(Error::InvalidVolume(format!(
                        "probability volume sums to {sum}, expected 0 or 1"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> Vec3 {
        self.spacing
    }

    pub fn kind(&self) -> VolumeKind {
        self.kind
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Physical size of the volume in millimeters.
    pub fn extent(&self) -> Vec3 {
        [
            self.dims[0] as f64 * self.spacing[0],
            self.dims[1] as f64 * self.spacing[1],
            self.dims[2] as f64 * self.spacing[2],
        ]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.index(i, j, k)]
    }

    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        [
            (i as f64 + 0.5) * self.spacing[0],
            (j as f64 + 0.5) * self.spacing[1],
            (k as f64 + 0.5) * self.spacing[2],
        ]
    }

    /// Voxel containing `p`; points on the far boundary map to the last voxel.
    pub fn voxel_at(&self, p: Vec3) -> Option<[usize; 3]> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let x = p[a] / self.spacing[a];
            if !x.is_finite() || x < 0.0 || x > self.dims[a] as f64 {
                return None;
            }
            out[a] = (x.floor() as usize).min(self.dims[a] - 1);
        }
        Some(out)
    }

    /// Value of the voxel containing `p`.
    pub fn sample(&self, p: Vec3) -> Result<f64> {
        let [i, j, k] = self.voxel_at(p).ok_or(Error::OutsideVolume(p))?;
        Ok(self.get(i, j, k))
    }

    pub fn contains(&self, p: Vec3) -> bool {
        self.voxel_at(p).is_some()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Number of voxels with a nonzero value.
    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0.0).count()
    }

    /// Copy with a different kind, re-validated.
    pub fn with_kind(&self, kind: VolumeKind) -> Result<Self> {
        Self::new(self.dims, self.spacing, self.data.clone(), kind)
    }

    /// Values of one slice, row-major in the two remaining axes.
    ///
    /// For `Axis::Z` rows run along y and columns along x; for `Axis::Y`
    /// rows run along z and columns along x; for `Axis::X` rows run along z
    /// and columns along y.
    pub fn slice(&self, axis: Axis, index: usize) -> Result<(usize, usize, Vec<f64>)> {
        let len = self.dims[axis.index()];
        if index >= len {
            return Err(Error::IndexOutOfRange { index, len });
        }
        let [x, y, z] = self.dims;
        let (w, h) = match axis {
            Axis::Z => (x, y),
            Axis::Y => (x, z),
            Axis::X => (y, z),
        };
        let mut out = Vec::with_capacity(w * h);
        for row in 0..h {
            for col in 0..w {
                let v = match axis {
                    Axis::Z => self.get(col, row, index),
                    Axis::Y => self.get(col, index, row),
                    Axis::X => self.get(index, col, row),
                };
                out.push(v);
            }
        }
        Ok((w, h, out))
    }

    /// Raw little-endian f32 bytes in storage order.
    pub fn raw_bytes(&self) -> Vec<u8> {
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        for &v in &self.data {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        bytes
    }
}

/// Hex SHA-256 of a byte buffer.
pub fn checksum(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Metadata written next to every raw volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub dims: [usize; 3],
    pub spacing: Vec3,
    pub kind: VolumeKind,
    pub checksum: String,
}

/// Sidecar path for a raw volume path (`foo.raw` -> `foo.json`).
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes `path` (raw f32 data) and its JSON sidecar. Returns the checksum.
///
/// Values are stored as 32-bit floats; a volume read back from disk is
/// reproduced bit-exactly by a second write/read cycle.
pub fn write_volume(v: &Volume3D, path: &Path) -> Result<String> {
    let bytes = v.raw_bytes();
    let sum = checksum(&bytes);
    let sidecar = Sidecar {
        dims: v.dims,
        spacing: v.spacing,
        kind: v.kind,
        checksum: sum.clone(),
    };
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(&sidecar)?;
    fs::write(&side, text).map_err(|e| Error::io(&side, e))?;
    Ok(sum)
}

pub fn read_volume(path: &Path) -> Result<Volume3D> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| Error::Sidecar {
        path: side.clone(),
        message: e.to_string(),
    })?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Sidecar {
            path: path.to_path_buf(),
            message: format!("raw size {} is not a multiple of 4 bytes", bytes.len()),
        });
    }
    let expected: usize = sidecar.dims.iter().product();
    if bytes.len() / 4 != expected {
        return Err(Error::LengthMismatch {
            dims: sidecar.dims,
            expected,
            actual: bytes.len() / 4,
        });
    }
    let actual = checksum(&bytes);
    if !actual.eq_ignore_ascii_case(&sidecar.checksum) {
        return Err(Error::Checksum {
            path: path.to_path_buf(),
            expected: sidecar.checksum,
            actual,
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Volume3D::new(sidecar.dims, sidecar.spacing, data, sidecar.kind)
}

/// Grayscale rendering of one slice.
///
/// Binary volumes map 0/1 to black/white. Other kinds are min-max
/// normalized per slice; a constant slice renders as mid gray.
pub fn slice_image(v: &Volume3D, axis: Axis, index: usize) -> Result<GrayImage> {
    let (w, h, values) = v.slice(axis, index)?;
    let pixels: Vec<u8> = match v.kind {
        VolumeKind::Binary => values
            .iter()
            .map(|&x| if x != 0.0 { 255 } else { 0 })
            .collect(),
        VolumeKind::Scalar | VolumeKind::Probability => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                values
                    .iter()
                    .map(|&x| ((x - lo) / (hi - lo) * 255.0).round() as u8)
                    .collect()
            } else {
                vec![128; values.len()]
            }
        }
    };
    Ok(GrayImage::from_raw(w as u32, h as u32, pixels).expect("buffer matches slice size"))
}

pub fn render_slice(v: &Volume3D, axis: Axis, index: usize, out: &Path) -> Result<()> {
    let img = slice_image(v, axis, index)?;
    img.save_with_format(out, image::ImageFormat::Png)?;
    Ok(())
}

/// Uniform sampling lattice with `counts[a]` cell-centered points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub counts: [usize; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub index: [usize; 3],
    pub position: Vec3,
}

impl GridSpec {
    pub fn new(counts: [usize; 3]) -> Self {
        GridSpec { counts }
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self, dims: [usize; 3]) -> Result<()> {
        for a in 0..3 {
            if self.counts[a] == 0 || self.counts[a] > dims[a] {
                return Err(Error::InvalidGrid(format!(
                    "grid counts {:?} must satisfy 1 <= count <= dims {:?}",
                    self.counts, dims
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn linear_index(&self, idx: [usize; 3]) -> usize {
        idx[0] + self.counts[0] * (idx[1] + self.counts[1] * idx[2])
    }
}

/// Cell-centered grid points over the physical extent of `v`, x-fastest.
pub fn sample_grid(v: &Volume3D, g: &GridSpec) -> Result<Vec<GridPoint>> {
    g.validate(v.dims)?;
    let extent = v.extent();
    let step = [
        extent[0] / g.counts[0] as f64,
        extent[1] / g.counts[1] as f64,
        extent[2] / g.counts[2] as f64,
    ];
    let mut out = Vec::with_capacity(g.len());
    for k in 0..g.counts[2] {
        for j in 0..g.counts[1] {
            for i in 0..g.counts[0] {
                out.push(GridPoint {
                    index: [i, j, k],
                    position: [
                        (i as f64 + 0.5) * step[0],
                        (j as f64 + 0.5) * step[1],
                        (k as f64 + 0.5) * step[2],
                    ],
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(dims: [usize; 3]) -> Volume3D {
        Volume3D::from_fn(dims, [1.0, 0.5, 2.0], VolumeKind::Scalar, |i, j, k| {
            (i + 10 * j + 100 * k) as f64 * 0.25
        })
        .unwrap()
    }

    #[test]
    fn index_roundtrip() {
        let v = ramp([3, 4, 5]);
        for idx in 0..v.len() {
            let [i, j, k] = v.coords(idx);
            assert_eq!(v.index(i, j, k), idx);
        }
        assert_eq!(v.get(2, 1, 3), (2 + 10 + 300) as f64 * 0.25);
    }

    #[test]
    fn write_then_read_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.raw");
        let v = ramp([4, 3, 2]);
        write_volume(&v, &path).unwrap();
        let back = read_volume(&path).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn short_raw_is_length_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.raw");
        let bytes: Vec<u8> = (0..7).flat_map(|_| 1.0f32.to_le_bytes()).collect();
        fs::write(&path, &bytes).unwrap();
        let sidecar = Sidecar {
            dims: [2, 2, 2],
            spacing: [1.0; 3],
            kind: VolumeKind::Scalar,
            checksum: checksum(&bytes),
        };
        fs::write(
            sidecar_path(&path),
            serde_json::to_string(&sidecar).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            read_volume(&path),
            Err(Error::LengthMismatch {
                expected: 8,
                actual: 7,
                ..
            })
        ));
    }

    #[test]
    fn binary_with_half_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.raw");
        let scalar =
            Volume3D::new([2, 1, 1], [1.0; 3], vec![0.5, 1.0], VolumeKind::Scalar).unwrap();
        write_volume(&scalar, &path).unwrap();
        let side = sidecar_path(&path);
        let text = fs::read_to_string(&side)
            .unwrap()
            .replace("scalar", "binary");
        fs::write(&side, text).unwrap();
        assert!(matches!(read_volume(&path), Err(Error::InvalidVolume(_))));
        assert!(Volume3D::new([2, 1, 1], [1.0; 3], vec![0.5, 1.0], VolumeKind::Binary).is_err());
    }

    #[test]
    fn corrupted_raw_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.raw");
        write_volume(&ramp([2, 2, 2]), &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] ^= 1;
        fs::write(&path, bytes).unwrap();
        assert!(matches!(read_volume(&path), Err(Error::Checksum { .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            read_volume(Path::new("/nonexistent/v.raw")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn probability_mass_is_checked() {
        assert!(
            Volume3D::new([2, 1, 1], [1.0; 3], vec![0.5, 0.5], VolumeKind::Probability).is_ok()
        );
        assert!(
            Volume3D::new([2, 1, 1], [1.0; 3], vec![0.0, 0.0], VolumeKind::Probability).is_ok()
        );
        assert!(
            Volume3D::new([2, 1, 1], [1.0; 3], vec![0.5, 0.4], VolumeKind::Probability).is_err()
        );
    }

    #[test]
    fn grid_two_per_axis_hits_half_midpoints() {
        let v = Volume3D::zeros([8, 8, 8], [1.0; 3], VolumeKind::Scalar).unwrap();
        let pts = sample_grid(&v, &GridSpec::new([2, 2, 2])).unwrap();
        assert_eq!(pts.len(), 8);
        let mut xs: Vec<f64> = pts.iter().map(|p| p.position[0]).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        assert_eq!(xs, vec![2.0, 6.0]);
        // x-fastest ordering
        assert_eq!(pts[0].index, [0, 0, 0]);
        assert_eq!(pts[1].index, [1, 0, 0]);
        assert_eq!(pts[2].index, [0, 1, 0]);
    }

    #[test]
    fn single_grid_point_is_center() {
        let v = Volume3D::zeros([8, 6, 4], [1.0, 2.0, 0.5], VolumeKind::Scalar).unwrap();
        let pts = sample_grid(&v, &GridSpec::new([1, 1, 1])).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].position, [4.0, 6.0, 1.0]);
    }

    #[test]
    fn grid_larger_than_dims_is_rejected() {
        let v = Volume3D::zeros([8, 1, 1], [1.0; 3], VolumeKind::Scalar).unwrap();
        assert!(matches!(
            sample_grid(&v, &GridSpec::new([9, 1, 1])),
            Err(Error::InvalidGrid(_))
        ));
    }

    #[test]
    fn full_grid_visits_every_voxel_center_once() {
        let v = Volume3D::zeros([3, 4, 2], [0.5, 1.0, 2.0], VolumeKind::Scalar).unwrap();
        let pts = sample_grid(&v, &GridSpec::new(v.dims())).unwrap();
        assert_eq!(pts.len(), v.len());
        for (n, p) in pts.iter().enumerate() {
            let [i, j, k] = v.coords(n);
            assert_eq!(p.index, [i, j, k]);
            assert_eq!(p.position, v.voxel_center(i, j, k));
        }
    }

    #[test]
    fn constant_slice_renders_uniform_gray() {
        let v = Volume3D::new([4, 3, 2], [1.0; 3], vec![3.0; 24], VolumeKind::Scalar).unwrap();
        let img = slice_image(&v, Axis::Z, 1).unwrap();
        assert_eq!(img.dimensions(), (4, 3));
        let first = img.as_raw()[0];
        assert!(img.as_raw().iter().all(|&p| p == first));
    }

    #[test]
    fn binary_slice_white_count_matches_sum() {
        let v = Volume3D::from_fn([5, 4, 3], [1.0; 3], VolumeKind::Binary, |i, j, k| {
            ((i * 7 + j * 3 + k) % 3 == 0) as u8 as f64
        })
        .unwrap();
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            for index in 0..v.dims()[axis.index()] {
                let img = slice_image(&v, axis, index).unwrap();
                let whites = img.as_raw().iter().filter(|&&p| p == 255).count();
                let (_, _, vals) = v.slice(axis, index).unwrap();
                assert_eq!(whites as f64, vals.iter().sum::<f64>());
            }
        }
    }

    #[test]
    fn render_out_of_range_slice_fails() {
        let dir = tempfile::tempdir().unwrap();
        let v = Volume3D::zeros([4, 4, 4], [1.0; 3], VolumeKind::Scalar).unwrap();
        let out = dir.path().join("s.png");
        assert!(matches!(
            render_slice(&v, Axis::Z, 4, &out),
            Err(Error::IndexOutOfRange { index: 4, len: 4 })
        ));
        render_slice(&v, Axis::Z, 3, &out).unwrap();
        let img = image::open(&out).unwrap().to_luma8();
        assert_eq!(img.dimensions(), (4, 4));
    }

    #[test]
    fn voxel_lookup_clamps_far_boundary() {
        let v = Volume3D::zeros([4, 4, 4], [1.0; 3], VolumeKind::Scalar).unwrap();
        assert_eq!(v.voxel_at([4.0, 0.0, 3.99]), Some([3, 0, 3]));
        assert_eq!(v.voxel_at([4.01, 0.0, 0.0]), None);
        assert_eq!(v.voxel_at([-0.01, 0.0, 0.0]), None);
    }

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(
            dims in (1usize..5, 1usize..5, 1usize..5),
            seed in any::<u32>(),
            kind_sel in 0u8..2,
        ) {
            let dims = [dims.0, dims.1, dims.2];
            let n = dims.iter().product::<usize>();
            let kind = if kind_sel == 0 { VolumeKind::Scalar } else { VolumeKind::Binary };
            let data: Vec<f64> = (0..n).map(|i| {
                let x = (seed as u64).wrapping_mul(2654435761).wrapping_add(i as u64 * 40503) % 1000;
                match kind {
                    VolumeKind::Binary => (x % 2) as f64,
                    _ => (x as f32 / 7.0 - 50.0) as f64,
                }
            }).collect();
            let v = Volume3D::new(dims, [0.7, 1.0, 1.3], data, kind).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("p.raw");
            let c1 = write_volume(&v, &path).unwrap();
            let back = read_volume(&path).unwrap();
            prop_assert_eq!(&back, &v);
            let c2 = write_volume(&back, &path).unwrap();
            prop_assert_eq!(c1, c2);
        }

        #[test]
        fn grid_geometry_ignores_contents(fill in -5.0f64..5.0, c in 1usize..6) {
            let a = Volume3D::zeros([6, 6, 6], [1.5; 3], VolumeKind::Scalar).unwrap();
            let b = Volume3D::new([6, 6, 6], [1.5; 3], vec![fill; 216], VolumeKind::Scalar).unwrap();
            let g = GridSpec::new([c, 6, 1]);
            prop_assert_eq!(sample_grid(&a, &g).unwrap(), sample_grid(&b, &g).unwrap());
        }
    }
}
