use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nominal levels and the levels they achieved in simulation, both strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMap {
    nominal: Vec<f64>,
    achieved: Vec<f64>,
}

impl CalibrationMap {
    pub fn new(pairs: &[(f64, f64)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::invalid("calibration map needs at least one point"));
        }
        let strictly_increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        let nominal: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let achieved: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        if !strictly_increasing(&nominal) || !strictly_increasing(&achieved) {
            return Err(Error::invalid("calibration levels must be strictly increasing"));
        }
        if nominal.iter().chain(&achieved).any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("calibration levels must be probabilities"));
        }
        Ok(Self { nominal, achieved })
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nominal.iter().copied().zip(self.achieved.iter().copied())
    }
}

/// Nominal level expected to achieve `desired`, by linear interpolation of achieved → nominal.
pub fn calibrate(map: &CalibrationMap, desired: f64) -> Result<f64> {
    let a = &map.achieved;
    let (lo, hi) = (a[0], a[a.len() - 1]);
    if !(desired >= lo && desired <= hi) {
        return Err(Error::TargetOutOfRange { target: desired, lo, hi });
    }
    let k = a.partition_point(|&x| x < desired);
    if a[k] == desired {
        return Ok(map.nominal[k]);
    }
    let w = (desired - a[k - 1]) / (a[k] - a[k - 1]);
    Ok(map.nominal[k - 1] + w * (map.nominal[k] - map.nominal[k - 1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let map = CalibrationMap::new(&[(0.8, 0.9), (0.9, 0.97)]).unwrap();
        assert_eq!(calibrate(&map, 0.9).unwrap(), 0.8);
        assert!((calibrate(&map, 0.935).unwrap() - 0.85).abs() < 1e-12);
        assert!(matches!(calibrate(&map, 0.99), Err(Error::TargetOutOfRange { .. })));
    }

    #[test]
    fn rejects_non_monotone_maps() {
        assert!(CalibrationMap::new(&[(0.8, 0.9), (0.9, 0.9)]).is_err());
        assert!(CalibrationMap::new(&[(0.9, 0.8), (0.8, 0.9)]).is_err());
    }
}
