//! Graph JSON: `{"vertices": [[x, y]], "edges": [[i, j]], "boundary": [...], "weights": [...]}`.

use crate::error::{Error, Result};
use crate::geom::C64;
use crate::planar_map::{build_map, BoundaryArc, PlanarMap};
use crate::weights::IsingWeights;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphJson {
    pub vertices: Vec<[f64; 2]>,
    pub edges: Vec<[usize; 2]>,
    #[serde(default)]
    pub boundary: Vec<BoundaryArc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl GraphJson {
    pub fn from_map(map: &PlanarMap, weights: Option<&IsingWeights>) -> Self {
        GraphJson {
            vertices: map.positions().iter().map(|p| [p.re, p.im]).collect(),
            edges: map.edges().to_vec(),
            boundary: map.arcs().to_vec(),
            weights: weights.map(|w| w.as_slice().to_vec()),
        }
    }

    pub fn to_map(&self) -> Result<PlanarMap> {
        let pos: Vec<C64> = self.vertices.iter().map(|p| C64::new(p[0], p[1])).collect();
        build_map(&pos, &self.edges, &self.boundary)
    }

    /// Map and weights; `default_x` is used when the file carries no weights.
    pub fn to_model(&self, default_x: Option<f64>) -> Result<(PlanarMap, IsingWeights)> {
        let map = self.to_map()?;
        let w = match (&self.weights, default_x) {
            (Some(w), _) => IsingWeights::new(&map, w.clone())?,
            (None, Some(x)) => IsingWeights::uniform(&map, x)?,
            (None, None) => return Err(Error::Input("graph has no weights".into())),
        };
        Ok((map, w))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_string_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph json serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_string_pretty())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_square() {
        let text = r#"{"vertices": [[1,0],[0,1],[-1,0],[0,-1]], "edges": [[0,1],[1,2],[2,3],[3,0]],
                       "boundary": [{"type": "wired", "edges": [0,1,2,3]}], "weights": [0.5,0.5,0.5,0.5]}"#;
        let g = GraphJson::parse(text).unwrap();
        let (map, w) = g.to_model(None).unwrap();
        assert_eq!((map.num_vertices(), map.num_edges(), map.num_faces()), (4, 4, 2));
        let back = GraphJson::from_map(&map, Some(&w));
        assert_eq!(GraphJson::parse(&back.to_string_pretty()).unwrap(), back);
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(GraphJson::parse(r#"{"vertices": [], "edges": [], "colour": 1}"#).is_err());
    }
}
