//! Versioned JSON for map chains. Floats are written in shortest
//! round-trip form, so reading back gives bit-identical coefficients.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear::Homography;
use crate::taylor::{ChainStage, MapChain, StructuredTaylorMap};

pub const MAP_FORMAT: &str = "taylor-icp-map-chain";
pub const MAP_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ChainDoc {
    format: String,
    version: u32,
    stages: Vec<StageDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum StageDoc {
    Taylor {
        center: Vec<f64>,
        /// `blocks[k][row][col]`
        blocks: Vec<Vec<Vec<f64>>>,
    },
    Projective {
        matrix: [[f64; 3]; 3],
    },
}

pub fn write_map(chain: &MapChain) -> Result<String> {
    let stages = chain
        .stages()
        .iter()
        .map(|s| match s {
            ChainStage::Taylor(m) => StageDoc::Taylor {
                center: m.center().to_vec(),
                blocks: m
                    .blocks()
                    .iter()
                    .map(|b| b.row_iter().map(|r| r.iter().copied().collect()).collect())
                    .collect(),
            },
            ChainStage::Projective(h) => StageDoc::Projective { matrix: h.matrix },
        })
        .collect();
    let doc = ChainDoc {
        format: MAP_FORMAT.into(),
        version: MAP_VERSION,
        stages,
    };
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))
}

pub fn read_map(text: &str) -> Result<MapChain> {
    let doc: ChainDoc = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    if doc.format != MAP_FORMAT {
        return Err(Error::Format(format!(
            "not a map chain document: {:?}",
            doc.format
        )));
    }
    if doc.version != MAP_VERSION {
        return Err(Error::Format(format!(
            "map chain version {} is not supported (expected {MAP_VERSION})",
            doc.version
        )));
    }
    let mut stages = Vec::with_capacity(doc.stages.len());
    for (i, s) in doc.stages.into_iter().enumerate() {
        stages.push(match s {
            StageDoc::Taylor { center, blocks } => {
                let n = center.len();
                let mats = blocks
                    .iter()
                    .map(|rows| {
                        if rows.len() != n {
                            return Err(Error::Format(format!(
                                "stage {i}: block has {} rows, expected {n}",
                                rows.len()
                            )));
                        }
                        let cols = rows.first().map(Vec::len).unwrap_or(0);
                        if rows.iter().any(|r| r.len() != cols) {
                            return Err(Error::Format(format!("stage {i}: ragged block")));
                        }
                        Ok(DMatrix::from_row_iterator(
                            n,
                            cols,
                            rows.iter().flatten().copied(),
                        ))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let map = StructuredTaylorMap::from_blocks(center, mats)
                    .map_err(|e| Error::Format(format!("stage {i}: {e}")))?;
                ChainStage::Taylor(map)
            }
            StageDoc::Projective { matrix } => {
                if !matrix.iter().flatten().all(|v| v.is_finite()) {
                    return Err(Error::Format(format!("stage {i}: non-finite homography")));
                }
                ChainStage::Projective(Homography { matrix })
            }
        });
    }
    Ok(MapChain::from_stages(stages))
}

pub fn save_map(path: impl AsRef<std::path::Path>, chain: &MapChain) -> Result<()> {
    std::fs::write(path, write_map(chain)?)?;
    Ok(())
}

pub fn load_map(path: impl AsRef<std::path::Path>) -> Result<MapChain> {
    read_map(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_round_trip() {
        let mut c = MapChain::new();
        c.push(StructuredTaylorMap::identity(2, 2));
        let back = read_map(&write_map(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn truncated_is_format_error() {
        let mut c = MapChain::new();
        c.push(StructuredTaylorMap::identity(3, 3));
        let text = write_map(&c).unwrap();
        for cut in [1, text.len() / 3, text.len() - 2] {
            assert!(matches!(read_map(&text[..cut]), Err(Error::Format(_))));
        }
    }

    #[test]
    fn version_mismatch() {
        let text = write_map(&MapChain::new())
            .unwrap()
            .replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(read_map(&text), Err(Error::Format(_))));
    }

    #[test]
    fn projective_stage_round_trip() {
        let c = MapChain::from_stages(vec![ChainStage::Projective(Homography {
            matrix: [[1.0, 0.1, 0.3], [0.0, 0.9, -0.2], [0.05, -0.03, 1.0]],
        })]);
        assert_eq!(read_map(&write_map(&c).unwrap()).unwrap(), c);
    }
}
