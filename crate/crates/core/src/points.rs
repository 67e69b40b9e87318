//! Control points: matched (spectral signature, RGB color) pairs.
//!
//! On disk a set is one JSON document with the fields `version`, `bands`,
//! `sensor` and `pairs`, always written in that order. Each pair holds `u`
//! (the signature), `v` (the color) and optionally `hsi` / `rgb` pixel
//! coordinates recording where it was picked.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlPair {
    pub u: Vec<f64>,
    pub v: [u8; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hsi: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rgb: Option<[usize; 2]>,
}

impl ControlPair {
    pub fn new(u: Vec<f64>, v: [u8; 3]) -> Self {
        Self { u, v, hsi: None, rgb: None }
    }

    pub fn with_provenance(mut self, hsi: [usize; 2], rgb: [usize; 2]) -> Self {
        self.hsi = Some(hsi);
        self.rgb = Some(rgb);
        self
    }

    pub fn v_f64(&self) -> [f64; 3] {
        [self.v[0] as f64, self.v[1] as f64, self.v[2] as f64]
    }
}

/// A non-empty set of control pairs sharing one band count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlPointSet {
    version: u32,
    bands: usize,
    sensor: String,
    pairs: Vec<ControlPair>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSet {
    version: u32,
    bands: usize,
    sensor: String,
    pairs: Vec<ControlPair>,
}

impl ControlPointSet {
    pub fn new(bands: usize, sensor: impl Into<String>, pairs: Vec<ControlPair>) -> Result<Self> {
        if bands == 0 {
            return Err(Error::Schema("bands must be at least 1".into()));
        }
        if pairs.is_empty() {
            return Err(Error::Schema("a control-point set needs at least one pair".into()));
        }
        for (i, pair) in pairs.iter().enumerate() {
            if pair.u.len() != bands {
                return Err(Error::Schema(format!(
                    "pair {i}: u has {} values but bands = {bands}",
                    pair.u.len()
                )));
            }
            if pair.u.iter().any(|v| !v.is_finite()) {
                return Err(Error::Schema(format!("pair {i}: u contains a non-finite value")));
            }
            if pair.u.iter().all(|&v| v == 0.0) {
                return Err(Error::ZeroSignature(format!("pair {i}")));
            }
        }
        Ok(Self {
            version: FORMAT_VERSION,
            bands,
            sensor: sensor.into(),
            pairs,
        })
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn sensor(&self) -> &str {
        &self.sensor
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    /// Always false; kept for the `len`/`is_empty` convention.
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[ControlPair] {
        &self.pairs
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ControlPair> {
        self.pairs.iter()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("control points always serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawSet = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        if raw.version != FORMAT_VERSION {
            return Err(Error::Schema(format!("unsupported version {}", raw.version)));
        }
        Self::new(raw.bands, raw.sensor, raw.pairs)
    }
}

impl<'a> IntoIterator for &'a ControlPointSet {
    type Item = &'a ControlPair;
    type IntoIter = std::slice::Iter<'a, ControlPair>;

    fn into_iter(self) -> Self::IntoIter {
        self.pairs.iter()
    }
}

pub fn read_control_points(path: impl AsRef<Path>) -> Result<ControlPointSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ControlPointSet::from_json(&text)
}

pub fn write_control_points(set: &ControlPointSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, set.to_json()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_pair_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cp.json");
        let set = ControlPointSet::new(3, "", vec![ControlPair::new(vec![1.0, 2.0, 3.0], [10, 20, 30])]).unwrap();
        write_control_points(&set, &path).unwrap();
        assert_eq!(read_control_points(&path).unwrap(), set);
    }

    #[test]
    fn field_order_is_fixed() {
        let set = ControlPointSet::new(
            2,
            "oksi",
            vec![ControlPair::new(vec![0.5, 1.0], [1, 2, 3]).with_provenance([4, 5], [6, 7])],
        )
        .unwrap();
        let text = set.to_json();
        let pos = |k: &str| text.find(k).unwrap();
        assert!(pos("\"version\"") < pos("\"bands\""));
        assert!(pos("\"bands\"") < pos("\"sensor\""));
        assert!(pos("\"sensor\"") < pos("\"pairs\""));
        assert!(pos("\"u\"") < pos("\"v\""));
        assert!(pos("\"v\"") < pos("\"hsi\""));
        assert!(pos("\"hsi\"") < pos("\"rgb\""));
    }

    #[test]
    fn short_u_is_schema_error() {
        let text = r#"{"version":1,"bands":3,"sensor":"x","pairs":[{"u":[1,2],"v":[1,2,3]}]}"#;
        assert!(matches!(ControlPointSet::from_json(text), Err(Error::Schema(_))));
    }

    #[test]
    fn zero_u_is_rejected() {
        let text = r#"{"version":1,"bands":3,"sensor":"x","pairs":[{"u":[0,0,0],"v":[1,2,3]}]}"#;
        assert!(matches!(ControlPointSet::from_json(text), Err(Error::ZeroSignature(_))));
    }

    #[test]
    fn schema_violations() {
        for text in [
            r#"{"version":2,"bands":1,"sensor":"x","pairs":[{"u":[1],"v":[1,2,3]}]}"#,
            r#"{"version":1,"bands":1,"sensor":"x","pairs":[]}"#,
            r#"{"version":1,"bands":1,"sensor":"x","pairs":[{"u":[1],"v":[1,2,300]}]}"#,
            r#"{"version":1,"bands":1,"sensor":"x","pairs":[{"u":[1],"v":[1,2]}]}"#,
            r#"{"version":1,"bands":1,"pairs":[{"u":[1],"v":[1,2,3]}]}"#,
            r#"{"version":1,"bands":1,"sensor":"x","pairs":[{"u":[1],"v":[1,2,3],"w":1}]}"#,
            "not json",
        ] {
            assert!(ControlPointSet::from_json(text).is_err(), "{text}");
        }
    }

    proptest! {
        #[test]
        fn json_round_trip_is_lossless(
            bands in 1usize..6,
            seeds in prop::collection::vec((prop::collection::vec(1e-6f64..1e6, 6), any::<[u8; 3]>(), any::<bool>()), 1..8),
            sensor in "[a-zA-Z0-9 _-]{0,12}",
        ) {
            let pairs: Vec<ControlPair> = seeds
                .into_iter()
                .enumerate()
                .map(|(i, (u, v, prov))| {
                    let p = ControlPair::new(u[..bands].to_vec(), v);
                    if prov { p.with_provenance([i, i + 1], [2 * i, 3 * i]) } else { p }
                })
                .collect();
            let set = ControlPointSet::new(bands, sensor, pairs).unwrap();
            let text = set.to_json();
            let back = ControlPointSet::from_json(&text).unwrap();
            prop_assert_eq!(&back, &set);
            prop_assert_eq!(back.to_json(), text);
        }
    }
}
