use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ColaError, Result};

/// Output of activation-space sample selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// One representative per cluster, ordered by cluster index.
    pub selected_ids: Vec<String>,
    pub cluster_assignments: BTreeMap<String, usize>,
    /// k x d centroids in the projected space.
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub seed: u64,
}

impl SelectionResult {
    /// Checks the structural invariants: one representative per non-empty
    /// cluster, each belonging to its own cluster.
    pub fn validate(&self) -> Result<()> {
        let k = self.centroids.len();
        let mut occupied = vec![false; k];
        for (id, &c) in &self.cluster_assignments {
            if c >= k {
                return Err(ColaError::Validation(format!(
                    "`{id}` assigned to cluster {c} of {k}"
                )));
            }
            occupied[c] = true;
        }
        let non_empty = occupied.iter().filter(|&&o| o).count();
        if self.selected_ids.len() != non_empty {
            return Err(ColaError::Validation(format!(
                "{} representatives for {non_empty} non-empty clusters",
                self.selected_ids.len()
            )));
        }
        let mut covered = vec![false; k];
        for id in &self.selected_ids {
            let &c = self
                .cluster_assignments
                .get(id)
                .ok_or_else(|| ColaError::Lookup(id.clone()))?;
            if std::mem::replace(&mut covered[c], true) {
                return Err(ColaError::Validation(format!(
                    "cluster {c} has more than one representative"
                )));
            }
        }
        if !(self.inertia >= 0.0) {
            return Err(ColaError::Validation(format!("inertia {}", self.inertia)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| ColaError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ColaError::io(path, e))?;
        let result: SelectionResult = serde_json::from_str(&text)?;
        result.validate()?;
        Ok(result)
    }
}
