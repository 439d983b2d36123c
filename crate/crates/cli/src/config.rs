//! Run configuration: a canonical JSON document mirroring the CLI flags.
//! Unknown keys are rejected; a config file overrides flags.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use radshoot::IntegrationControls;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dim: Option<u32>,
    pub order: Option<u32>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    /// Full even-order initial data (overrides alpha/beta) for m >= 2.
    pub init: Option<Vec<f64>>,
    pub p: Option<f64>,
    /// u(0) for negative-power problems.
    pub a: Option<f64>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub rmax: Option<f64>,
    pub tol_beta: Option<f64>,
    pub u_max: Option<f64>,
    pub u_min: Option<f64>,
    pub h_min: Option<f64>,
    pub max_steps: Option<usize>,
    pub r0: Option<f64>,
    pub beta_grid: Option<Vec<f64>>,
    pub a_grid: Option<Vec<f64>>,
    pub b_grid: Option<Vec<f64>>,
    pub checks: Option<Vec<String>>,
    pub r_samples: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    pub force: Option<bool>,
    /// Reserved; every computation in the laboratory is deterministic.
    pub seed: Option<u64>,
}

impl RunConfig {
    /// Overlay `file` on top of `self`: file values win.
    pub fn overlay(&mut self, file: RunConfig) {
        macro_rules! take {
            ($($f:ident),*) => { $( if file.$f.is_some() { self.$f = file.$f; } )* };
        }
        take!(
            dim, order, alpha, beta, init, p, a, rtol, atol, rmax, tol_beta, u_max, u_min, h_min,
            max_steps, r0, beta_grid, a_grid, b_grid, checks, r_samples, out, force, seed
        );
    }

    pub fn controls(&self, default_r_max: f64) -> IntegrationControls {
        let d = IntegrationControls::default();
        IntegrationControls {
            rtol: self.rtol.unwrap_or(d.rtol),
            atol: self.atol.unwrap_or(d.atol),
            r_max: self.rmax.unwrap_or(default_r_max),
            u_max: self.u_max.unwrap_or(d.u_max),
            u_min: self.u_min.unwrap_or(d.u_min),
            h_min: self.h_min.unwrap_or(d.h_min),
            max_steps: self.max_steps.unwrap_or(d.max_steps),
            r0: self.r0.unwrap_or(d.r0),
        }
    }

    pub fn require_dim(&self) -> Result<u32, String> {
        self.dim.ok_or_else(|| "missing required field `dim`".to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"dim": 4, "bogus": 1}"#).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn canonical_round_trip() {
        let cfg = RunConfig {
            dim: Some(3),
            beta: Some(-1.5),
            checks: Some(vec!["supersolution".into()]),
            ..Default::default()
        };
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.dim, Some(3));
        assert_eq!(back.beta, Some(-1.5));
        assert_eq!(back.checks.as_deref(), Some(&["supersolution".to_string()][..]));
    }

    #[test]
    fn overlay_prefers_file() {
        let mut cfg = RunConfig {
            dim: Some(4),
            rmax: Some(40.0),
            ..Default::default()
        };
        cfg.overlay(RunConfig {
            rmax: Some(100.0),
            ..Default::default()
        });
        assert_eq!(cfg.dim, Some(4));
        assert_eq!(cfg.rmax, Some(100.0));
    }
}
