use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(Error::NonFinite("coordinates"));
        }
        if lat.abs() > 90.0 {
            return Err(Error::invalid(format!("latitude {lat} outside [-90, 90]")));
        }
        Ok(Self { lat, lon })
    }
}

/// Great-circle distance in meters.
pub fn haversine(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Adds independent Gaussian noise of `sigma_meters` along the local north and
/// east axes.
pub fn simulate_gps(truth: GeoPoint, sigma_meters: f64, seed: u64) -> Result<GeoPoint> {
    let truth = GeoPoint::new(truth.lat, truth.lon)?;
    if !(sigma_meters >= 0.0) || !sigma_meters.is_finite() {
        return Err(Error::invalid(format!("sigma must be finite and >= 0, got {sigma_meters}")));
    }
    if sigma_meters == 0.0 {
        return Ok(truth);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma_meters).map_err(|e| Error::invalid(e.to_string()))?;
    let north: f64 = normal.sample(&mut rng);
    let east: f64 = normal.sample(&mut rng);
    let lat = (truth.lat + (north / EARTH_RADIUS_M).to_degrees()).clamp(-90.0, 90.0);
    let cos = truth.lat.to_radians().cos().max(1e-12);
    let mut lon = truth.lon + (east / (EARTH_RADIUS_M * cos)).to_degrees();
    if lon >= 180.0 {
        lon -= 360.0;
    } else if lon < -180.0 {
        lon += 360.0;
    }
    Ok(GeoPoint { lat, lon })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_is_identity() {
        let p = GeoPoint::new(51.75, -1.25).unwrap();
        assert_eq!(simulate_gps(p, 0.0, 3).unwrap(), p);
    }

    #[test]
    fn invalid_latitude() {
        assert!(GeoPoint::new(90.5, 0.0).is_err());
        assert!(simulate_gps(GeoPoint { lat: -91.0, lon: 0.0 }, 1.0, 0).is_err());
    }

    #[test]
    fn one_degree_of_latitude() {
        let a = GeoPoint::new(0.0, 0.0).unwrap();
        let b = GeoPoint::new(1.0, 0.0).unwrap();
        let expected = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        assert!((haversine(a, b) - expected).abs() < 1e-6);
        assert_eq!(haversine(a, a), 0.0);
    }
}
