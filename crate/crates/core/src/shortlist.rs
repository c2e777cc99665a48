//! Selection of the branches whose feasibility result may have changed after
//! an outage.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feasibility::FtResult;
use crate::model::BranchId;
use crate::update::UpdateResult;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("certificate store is at generation {store}, caller expected {expected}")]
pub struct StaleStore {
    pub store: u64,
    pub expected: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificateStore {
    certificates: BTreeMap<BranchId, BTreeSet<BranchId>>,
    generation: u64,
}

impl CertificateStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_results<'a>(results: impl IntoIterator<Item = &'a FtResult>) -> Self {
        let mut store = Self::new();
        store.refresh(results);
        store
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn len(&self) -> usize {
        self.certificates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.certificates.is_empty()
    }

    pub fn get(&self, branch: &BranchId) -> Option<&BTreeSet<BranchId>> {
        self.certificates.get(branch)
    }

    /// Replaces the certificates of re-tested branches. The generation only
    /// moves when something was replaced.
    pub fn refresh<'a>(&mut self, results: impl IntoIterator<Item = &'a FtResult>) {
        let mut any = false;
        for r in results {
            self.certificates.insert(r.branch.clone(), r.certificate.clone());
            any = true;
        }
        if any {
            self.generation += 1;
        }
    }

    /// Drops entries for branches that left the analysis (removed or no
    /// longer carrying flow).
    pub fn forget<'a>(&mut self, branches: impl IntoIterator<Item = &'a BranchId>) {
        let mut any = false;
        for b in branches {
            any |= self.certificates.remove(b).is_some();
        }
        if any {
            self.generation += 1;
        }
    }

    /// Branches to re-test after `update`: every branch whose certificate
    /// meets a changed branch or the outaged one, plus the changed branches.
    pub fn shortlist(&self, update: &UpdateResult, expected_generation: u64) -> Result<BTreeSet<BranchId>, StaleStore> {
        if expected_generation != self.generation {
            return Err(StaleStore {
                store: self.generation,
                expected: expected_generation,
            });
        }
        let touched = |b: &BranchId| update.changed_branches.contains(b) || *b == update.outaged;
        let mut out: BTreeSet<BranchId> = self
            .certificates
            .iter()
            .filter(|(_, cert)| cert.iter().any(touched))
            .map(|(b, _)| b.clone())
            .collect();
        out.extend(update.changed_branches.iter().cloned());
        out.remove(&update.outaged);
        Ok(out)
    }
}
