//! Aggregation of independently fitted cancer models under one shared
//! testing protocol.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::natural_history::NaturalHistoryParams;
use crate::screening::project::{stage_shift, TrialProjection};
use crate::screening::ScreeningProtocol;

/// A fitted single-cancer model entering the combined projection.
#[derive(Debug, Clone)]
pub struct SiteModel {
    pub site: String,
    pub params: NaturalHistoryParams,
}

/// Per-site projections plus the pooled shift across sites.
#[derive(Debug, Clone)]
pub struct McedProjection {
    pub per_site: Vec<(String, TrialProjection)>,
    /// Pooled relative reduction, weighting each site by its expected
    /// advanced-case probability. Reported as an extension of the per-site
    /// outputs.
    pub pooled_shift: f64,
}

/// Projects each site independently under the shared protocol and pools the
/// advanced-case probabilities across sites.
pub fn mced_project(models: &[SiteModel], protocol: &ScreeningProtocol) -> Result<McedProjection> {
    if models.is_empty() {
        return Err(Error::InvalidArgument(
            "combined projection needs at least one site model".into(),
        ));
    }
    let per_site: Vec<(String, TrialProjection)> = models
        .par_iter()
        .map(|m| Ok((m.site.clone(), stage_shift(&m.params, protocol)?)))
        .collect::<Result<_>>()?;

    let total_control: f64 = per_site
        .iter()
        .map(|(_, p)| p.total_control_advanced())
        .sum();
    if total_control <= 0.0 {
        return Err(Error::UndefinedShift);
    }
    let total_intervention: f64 = per_site
        .iter()
        .map(|(_, p)| p.total_intervention_advanced())
        .sum();
    let pooled_shift = (total_control - total_intervention) / total_control;

    Ok(McedProjection {
        per_site,
        pooled_shift,
    })
}
