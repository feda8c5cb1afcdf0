use crate::error::{check_dim, Result};
use crate::linear::Homography;
use crate::points::PointSet;

use super::map::{EvalScratch, StructuredTaylorMap};

/// One step of a [`MapChain`].
///
/// The restricted projective stage is rational, not polynomial, so it gets
/// its own variant instead of being squeezed into a Taylor block.
#[derive(Debug, Clone, PartialEq)]
pub enum ChainStage {
    Taylor(StructuredTaylorMap),
    Projective(Homography),
}

impl ChainStage {
    pub fn dim(&self) -> usize {
        match self {
            ChainStage::Taylor(m) => m.dim(),
            ChainStage::Projective(_) => 2,
        }
    }

    pub fn apply(&self, points: &PointSet) -> Result<PointSet> {
        match self {
            ChainStage::Taylor(m) => m.apply(points),
            ChainStage::Projective(h) => h.apply(points),
        }
    }
}

impl From<StructuredTaylorMap> for ChainStage {
    fn from(m: StructuredTaylorMap) -> Self {
        ChainStage::Taylor(m)
    }
}

/// Maps applied in storage order: `stages[0]` first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MapChain {
    stages: Vec<ChainStage>,
}

impl MapChain {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_stages(stages: Vec<ChainStage>) -> Self {
        Self { stages }
    }

    pub fn push(&mut self, stage: impl Into<ChainStage>) {
        self.stages.push(stage.into());
    }

    pub fn stages(&self) -> &[ChainStage] {
        &self.stages
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    /// Product of `max(order, 1)` over the Taylor stages. A projective stage
    /// is not a polynomial and leaves the bound untouched.
    pub fn degree_bound(&self) -> u128 {
        self.stages
            .iter()
            .map(|s| match s {
                ChainStage::Taylor(m) => m.order().max(1) as u128,
                ChainStage::Projective(_) => 1,
            })
            .fold(1u128, |acc, f| acc.saturating_mul(f))
    }

    pub fn apply(&self, points: &PointSet) -> Result<PointSet> {
        for s in &self.stages {
            check_dim(s.dim(), points.dim())?;
        }
        let mut cur = points.without_meta();
        for s in &self.stages {
            cur = s.apply(&cur)?;
        }
        Ok(cur)
    }

    pub fn evaluate(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut cur = y.to_vec();
        let mut scratch = EvalScratch::default();
        for s in &self.stages {
            check_dim(s.dim(), cur.len())?;
            cur = match s {
                ChainStage::Taylor(m) => {
                    let mut out = vec![0.0; cur.len()];
                    m.evaluate_into(&cur, &mut scratch, &mut out);
                    out
                }
                ChainStage::Projective(h) => h.evaluate(&cur)?,
            };
        }
        Ok(cur)
    }
}

pub fn apply_chain(chain: &MapChain, points: &PointSet) -> Result<PointSet> {
    chain.apply(points)
}

pub fn degree_bound(chain: &MapChain) -> u128 {
    chain.degree_bound()
}
