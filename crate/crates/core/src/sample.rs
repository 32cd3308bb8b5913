use serde::{Deserialize, Serialize};

use crate::grid::Coordinate;

/// Mission id reserved for the satellite reference domain.
pub const SATELLITE_MISSION: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    /// Satellite reference data, the source of the anchor set.
    Anchor,
    /// Held-out missions over cells never visited during the sequence.
    Unvisited,
}

/// One observation: a raw feature vector tagged with its cell and position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: u64,
    pub mission: u32,
    pub split: Split,
    pub label: usize,
    #[serde(with = "coord_pair")]
    pub gt: Coordinate,
    pub domain_tag: String,
    pub raw: Vec<f64>,
}

/// Serializes a coordinate as a two-element `[x, y]` array.
mod coord_pair {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::grid::Coordinate;

    pub fn serialize<S: Serializer>(c: &Coordinate, s: S) -> Result<S::Ok, S::Error> {
        [c.x, c.y].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Coordinate, D::Error> {
        let [x, y] = <[f64; 2]>::deserialize(d)?;
        Ok(Coordinate { x, y })
    }
}
