//! Tabulates the analytic savings model.

use dfrsim_core::energy::{self, ModelParams};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub n: f64,
    pub mu_s: f64,
    pub c_it: usize,
    pub dim: u8,
    pub p_active: f64,
    pub p_idle: f64,
    #[serde(rename = "c_e_J")]
    pub c_e_j: f64,
    #[serde(rename = "savings_rate_W")]
    pub savings_rate_w: f64,
    #[serde(rename = "e_jacobi_W")]
    pub e_jacobi_w: f64,
}

/// One row per process count. `p_idle` replaces the computed idle count when given.
pub fn model_table(
    ns: &[f64],
    mu: f64,
    c_it: usize,
    iter_seconds: f64,
    delta_power: f64,
    dim: u8,
    p_idle: Option<f64>,
) -> Result<Vec<ModelRow>, CliError> {
    ns.iter()
        .map(|&n| {
            let params = ModelParams { n, mu, c_it, iter_seconds, delta_power, dim };
            params.validate().map_err(|e| CliError::Config(e.to_string()))?;
            let idle = p_idle.unwrap_or_else(|| params.p_idle());
            Ok(ModelRow {
                n,
                mu_s: mu,
                c_it,
                dim,
                p_active: params.p_active(),
                p_idle: idle,
                c_e_j: params.c_e(),
                savings_rate_w: energy::savings_rate(n, mu, idle, params.c_e()),
                e_jacobi_w: energy::e_jacobi(n, mu, c_it),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use dfrsim_core::failure::YEAR;

    #[test]
    fn worked_example() {
        let rows = model_table(&[1e4, 1e5], 50.0 * YEAR, 10, 4.0, 10.0, 1, None).unwrap();
        assert!((rows[0].e_jacobi_w - 12.68).abs() < 0.01);
        assert!((rows[1].e_jacobi_w - 1268.4).abs() < 0.1);
        assert_eq!(rows[0].c_e_j, 200.0);
        assert!((rows[0].savings_rate_w / rows[0].e_jacobi_w - 1.0).abs() < 0.01);
    }

    #[test]
    fn forced_idle_count() {
        let rows = model_table(&[1e4], 50.0 * YEAR, 10, 4.0, 10.0, 1, Some(0.0)).unwrap();
        assert_eq!(rows[0].savings_rate_w, 0.0);
    }

    #[test]
    fn bad_dimension() {
        assert!(model_table(&[10.0], 1e6, 6, 4.0, 10.0, 3, None).is_err());
    }
}
