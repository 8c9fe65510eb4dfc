//! Component-level tables: pillar scores and sub-metrics already computed
//! elsewhere, used to check composition arithmetic without raw scores.

use serde::{Deserialize, Serialize};

use crate::aggregation::{PillarScores, PillarTable};
use crate::ingest::IngestError;
use crate::saturation::{anti_saturation, SaturationParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRow {
    pub rank: usize,
    pub benchmark: String,
    pub s_disc: f64,
    pub rcv: f64,
    pub edr: f64,
    pub s_as: f64,
    pub s_sta: f64,
    pub s_dyn: f64,
    pub s_imp: f64,
    pub n_usage: f64,
    pub n_comm: f64,
    pub bhi: f64,
}

impl ComponentRow {
    pub fn recomputed_s_as(&self) -> f64 {
        anti_saturation(self.s_sta, self.s_dyn, SaturationParams::STANDARD)
    }

    pub fn pillars(&self) -> PillarScores {
        PillarScores {
            s_disc: self.s_disc,
            s_as: self.s_as,
            s_imp: self.s_imp,
        }
    }
}

pub fn parse_components(text: &str, source_name: &str) -> Result<Vec<ComponentRow>, IngestError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize().enumerate() {
        rows.push(rec.map_err(|e| IngestError::Malformed {
            source_name: source_name.to_string(),
            line: i as u64 + 2,
            msg: e.to_string(),
        })?);
    }
    Ok(rows)
}

pub fn component_table(rows: &[ComponentRow]) -> PillarTable {
    PillarTable {
        ids: rows.iter().map(|r| r.benchmark.clone()).collect(),
        rows: rows.iter().map(ComponentRow::pillars).collect(),
    }
}
