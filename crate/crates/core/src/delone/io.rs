//! JSON form of a patch. Coordinates are written as exact decimal expansions.

use super::{DeloneError, DeloneMultiset, Label, LabeledPoint, Provenance};
use crate::geometry::Vec2;
use serde::{Deserialize, Serialize};

/// Exact decimal expansion of a finite `f64` (every binary fraction terminates).
pub fn exact_decimal(x: f64) -> String {
    assert!(x.is_finite(), "non-finite coordinate");
    if x == 0.0 {
        return "0".to_string();
    }
    let bits = x.abs().to_bits();
    let e = ((bits >> 52) & 0x7ff) as i64;
    let mut m = bits & ((1u64 << 52) - 1);
    let mut exp = if e == 0 { -1074 } else { e - 1075 };
    if e != 0 {
        m |= 1u64 << 52;
    }
    let tz = m.trailing_zeros() as i64;
    exp += tz;
    if exp >= 0 {
        format!("{x:.0}")
    } else {
        format!("{:.*}", (-exp) as usize, x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchFile {
    pub dimension: usize,
    pub labels: Vec<Label>,
    pub points: Vec<(Vec<String>, Label)>,
    pub window_radius: f64,
    pub packing_radius: f64,
    pub covering_radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl From<&DeloneMultiset> for PatchFile {
    fn from(p: &DeloneMultiset) -> Self {
        PatchFile {
            dimension: p.dimension(),
            labels: p.labels().to_vec(),
            points: p
                .points()
                .iter()
                .map(|q| (vec![exact_decimal(q.position.x), exact_decimal(q.position.y)], q.label))
                .collect(),
            window_radius: p.window_radius(),
            packing_radius: p.packing_radius(),
            covering_radius: p.covering_radius(),
            provenance: p.provenance().cloned(),
        }
    }
}

impl TryFrom<PatchFile> for DeloneMultiset {
    type Error = DeloneError;

    fn try_from(f: PatchFile) -> Result<Self, DeloneError> {
        if f.dimension != 2 {
            return Err(DeloneError::Dimension(f.dimension));
        }
        let mut points = Vec::with_capacity(f.points.len());
        for (c, l) in f.points {
            if c.len() != 2 {
                return Err(DeloneError::Malformed(format!("point with {} coordinates", c.len())));
            }
            if !f.labels.contains(&l) {
                return Err(DeloneError::UnknownLabel(l));
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| DeloneError::Malformed(format!("coordinate `{s}`: {e}")))
            };
            points.push(LabeledPoint { position: Vec2::new(parse(&c[0])?, parse(&c[1])?), label: l });
        }
        Ok(DeloneMultiset::with_radii(
            f.labels,
            points,
            f.window_radius,
            f.packing_radius,
            f.covering_radius,
            f.provenance,
        ))
    }
}

impl DeloneMultiset {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&PatchFile::from(self)).expect("patch serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, DeloneError> {
        let f: PatchFile =
            serde_json::from_str(s).map_err(|e| DeloneError::Malformed(e.to_string()))?;
        DeloneMultiset::try_from(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimals_are_exact() {
        assert_eq!(exact_decimal(0.4296875), "0.4296875");
        assert_eq!(exact_decimal(-3.0), "-3");
        assert_eq!(exact_decimal(1024.5), "1024.5");
        let tenth = exact_decimal(0.1);
        assert!(tenth.starts_with("0.1000000000000000055511151231257827"));
        for x in [0.1, 1.0 / 3.0, 1e-300, -7.25e20, f64::MIN_POSITIVE / 8.0] {
            assert_eq!(exact_decimal(x).parse::<f64>().unwrap(), x);
        }
    }
}
