use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// Physical placement of a voxel grid: extents `(D, H, W)`, spacing in mm per
/// axis and origin in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub extents: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl Geometry {
    /// Positive extents and spacing in (0, 10] mm.
    pub fn validate(&self) -> super::Result<()> {
        if self.extents.contains(&0) {
            return Err(super::DataError::InvalidGeometry(format!("zero extent in {:?}", self.extents)));
        }
        if !self.spacing.iter().all(|&s| s > 0.0 && s <= 10.0) {
            return Err(super::DataError::InvalidGeometry(format!("spacing {:?} outside (0, 10] mm", self.spacing)));
        }
        if !self.origin.iter().all(|o| o.is_finite()) {
            return Err(super::DataError::InvalidGeometry(format!("non-finite origin {:?}", self.origin)));
        }
        Ok(())
    }

    /// Unit spacing, zero origin.
    pub fn unit(extents: [usize; 3]) -> Self {
        Geometry { extents, spacing: [1.0; 3], origin: [0.0; 3] }
    }

    pub fn voxel_count(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.extents[1] + y) * self.extents[2] + x
    }
}

/// Scalar intensities on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub geometry: Geometry,
    pub intensities: Vec<f64>,
}

/// Binary labels on a grid; every value is 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    pub geometry: Geometry,
    pub values: Vec<u8>,
}

impl Volume {
    pub fn new(geometry: Geometry, intensities: Vec<f64>) -> Self {
        assert_eq!(geometry.voxel_count(), intensities.len(), "intensity count must match extents");
        Volume { geometry, intensities }
    }

    /// `[1, D, H, W]` network input.
    pub fn to_tensor(&self) -> Tensor {
        let [d, h, w] = self.geometry.extents;
        Tensor::from_vec(&[1, d, h, w], self.intensities.clone()).expect("extents match data")
    }
}

impl LabelMask {
    pub fn new(geometry: Geometry, values: Vec<u8>) -> Self {
        assert_eq!(geometry.voxel_count(), values.len(), "label count must match extents");
        assert!(values.iter().all(|&v| v <= 1), "labels must be 0 or 1");
        LabelMask { geometry, values }
    }

    /// Unit-spacing mask from any non-zero-is-foreground values.
    pub fn from_values(extents: [usize; 3], values: impl IntoIterator<Item = u8>) -> Self {
        Self::new(Geometry::unit(extents), values.into_iter().map(|v| u8::from(v != 0)).collect())
    }

    pub fn empty(geometry: Geometry) -> Self {
        LabelMask { geometry, values: vec![0; geometry.voxel_count()] }
    }

    pub fn extents(&self) -> [usize; 3] {
        self.geometry.extents
    }

    pub fn count(&self) -> usize {
        self.values.iter().map(|&v| v as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> bool {
        self.values[self.geometry.index(z, y, x)] != 0
    }

    /// `[1, D, H, W]` tensor of 0.0 / 1.0.
    pub fn to_tensor(&self) -> Tensor {
        let [d, h, w] = self.geometry.extents;
        Tensor::from_vec(&[1, d, h, w], self.values.iter().map(|&v| f64::from(v)).collect()).expect("extents match data")
    }

    /// Thresholds `probabilities > threshold` onto this geometry.
    pub fn from_probabilities(geometry: Geometry, probabilities: &[f64], threshold: f64) -> Self {
        Self::new(geometry, probabilities.iter().map(|&p| u8::from(p > threshold)).collect())
    }

    /// Volume whose intensities are the labels (0.0 / 1.0).
    pub fn to_volume(&self) -> Volume {
        Volume::new(self.geometry, self.values.iter().map(|&v| f64::from(v)).collect())
    }
}

/// A volume with its label mask on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub volume: Volume,
    pub mask: LabelMask,
}

impl Sample {
    pub fn new(id: impl Into<String>, volume: Volume, mask: LabelMask) -> super::Result<Self> {
        if volume.geometry != mask.geometry {
            return Err(super::DataError::InvalidGeometry(format!(
                "volume {:?} and mask {:?} disagree",
                volume.geometry, mask.geometry
            )));
        }
        Ok(Sample { id: id.into(), volume, mask })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.volume.geometry
    }
}
