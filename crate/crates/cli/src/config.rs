//! TOML configuration file. Every key is optional; flags override the file.

use std::path::Path;

use serde::Deserialize;
use udmdi::channel::{PhysicalityMode, Topology};
use udmdi::keyrate::{LinkModel, ProtocolConfig};
use udmdi::mc::McParams;
use udmdi::sweep::{Curve, FiniteSizeColumns, Grid, Scenario, SweepVariable, PRESET_BLOCK_LENGTHS};

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub finite_size: FiniteSizeSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub mc: McSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub modulation_variance: Option<f64>,
    pub beta: Option<f64>,
    /// Shorthand setting both links' excess noise.
    pub excess_noise: Option<f64>,
    pub excess_noise_a: Option<f64>,
    pub excess_noise_b: Option<f64>,
    /// dB/km.
    pub attenuation: Option<f64>,
    pub bob_side_efficiency: Option<f64>,
    /// Total distance, km.
    pub distance: Option<f64>,
    pub scenario: Option<Scenario>,
    pub strict_eq7: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteSizeSection {
    pub block_length: Option<f64>,
    pub key_fraction: Option<f64>,
    pub eps_pe: Option<f64>,
    pub eps_pa: Option<f64>,
    pub eps_smooth: Option<f64>,
    /// Block lengths reported as extra sweep columns.
    pub block_lengths: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub variable: Option<SweepVariable>,
    pub grid: Option<Vec<f64>>,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub step: Option<f64>,
    pub curves: Option<Vec<Curve>>,
    pub finite_size: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub trials: Option<usize>,
    pub m: Option<usize>,
    pub modulation_variance: Option<f64>,
    pub t_true: Option<f64>,
    pub sigma2_true: Option<f64>,
    pub eps_pe: Option<f64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn scenario(&self, flag: Option<Scenario>) -> Scenario {
        flag.or(self.protocol.scenario).unwrap_or(Scenario::Symmetric)
    }

    pub fn distance(&self) -> f64 {
        self.protocol.distance.unwrap_or(0.0)
    }

    /// Protocol configuration at `distance` km; defaults are the reference scenario.
    pub fn protocol(&self, scenario: Scenario, distance: f64, strict_eq7: bool) -> ProtocolConfig {
        let p = &self.protocol;
        let eps = p.excess_noise.unwrap_or(0.002);
        let alpha = p.attenuation.unwrap_or(udmdi::channel::DEFAULT_ATTENUATION_DB_PER_KM);
        let base = ProtocolConfig {
            modulation_variance: p.modulation_variance.unwrap_or(100.0),
            beta: p.beta.unwrap_or(0.98),
            topology: Topology::asymmetric(0.0, alpha, p.bob_side_efficiency.unwrap_or(0.98)),
            links: LinkModel::Fiber {
                eps_a: p.excess_noise_a.unwrap_or(eps),
                eps_b: p.excess_noise_b.unwrap_or(eps),
            },
            physicality_mode: if strict_eq7 || p.strict_eq7.unwrap_or(false) {
                PhysicalityMode::StrictLiteral
            } else {
                PhysicalityMode::Corrected
            },
        };
        scenario.at_distance(&base, distance)
    }

    pub fn finite_size_columns(&self) -> FiniteSizeColumns {
        let f = &self.finite_size;
        let mut cols = FiniteSizeColumns::reference(
            f.block_lengths.clone().unwrap_or_else(|| PRESET_BLOCK_LENGTHS.to_vec()),
        );
        if let Some(v) = f.key_fraction {
            cols.key_fraction = v;
        }
        if let Some(v) = f.eps_pe {
            cols.eps_pe = v;
        }
        if let Some(v) = f.eps_pa {
            cols.eps_pa = v;
        }
        if let Some(v) = f.eps_smooth {
            cols.eps_smooth = v;
        }
        cols
    }

    pub fn block_length(&self) -> f64 {
        self.finite_size.block_length.unwrap_or(1e9)
    }

    pub fn sweep_grid(&self) -> Result<Grid, CliError> {
        let s = &self.sweep;
        match (&s.grid, s.start, s.stop, s.step) {
            (Some(g), None, None, None) => Ok(Grid::Explicit(g.clone())),
            (None, Some(start), Some(stop), Some(step)) => Ok(Grid::Range { start, stop, step }),
            (None, None, None, None) => Err(CliError::Config(
                "sweep needs either `grid` or `start`/`stop`/`step`".into(),
            )),
            _ => Err(CliError::Config(
                "sweep grid: give either `grid` or all of `start`/`stop`/`step`, not a mix".into(),
            )),
        }
    }

    pub fn mc_params(&self, seed: u64) -> McParams {
        let m = &self.mc;
        let d = McParams::default();
        McParams {
            trials: m.trials.unwrap_or(d.trials),
            m: m.m.unwrap_or(d.m),
            modulation_variance: m.modulation_variance.unwrap_or(d.modulation_variance),
            t_true: m.t_true.unwrap_or(d.t_true),
            sigma2_true: m.sigma2_true.unwrap_or(d.sigma2_true),
            eps_pe: m.eps_pe.unwrap_or(d.eps_pe),
            seed,
            estimator: d.estimator,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_file() {
        let cfg: ConfigFile = toml::from_str(
            r#"
            [protocol]
            modulation_variance = 50.0
            beta = 0.96
            excess_noise = 0.01
            distance = 4.0
            scenario = "asymmetric"

            [finite_size]
            block_lengths = [1e6, 1e8]

            [sweep]
            variable = "distance"
            start = 0.0
            stop = 5.0
            step = 0.5
            curves = [{ label = "a", beta = 0.9 }]

            [mc]
            trials = 200
            "#,
        )
        .unwrap();
        let p = cfg.protocol(cfg.scenario(None), cfg.distance(), false);
        assert_eq!(p.modulation_variance, 50.0);
        assert_eq!(p.topology.l_ac, 4.0);
        assert_eq!(p.topology.bob_side_efficiency, 0.98);
        assert!(matches!(cfg.sweep_grid().unwrap(), Grid::Range { .. }));
        assert_eq!(cfg.finite_size_columns().block_lengths, vec![1e6, 1e8]);
        assert_eq!(cfg.mc_params(3).trials, 200);
    }

    #[test]
    fn rejects_unknown_keys_and_mixed_grids() {
        assert!(toml::from_str::<ConfigFile>("[protocol]\nbogus = 1").is_err());
        let cfg: ConfigFile = toml::from_str("[sweep]\ngrid = [1.0]\nstart = 0.0").unwrap();
        assert!(cfg.sweep_grid().is_err());
    }

    #[test]
    fn strict_flag_selects_literal_form() {
        let cfg = ConfigFile::default();
        let p = cfg.protocol(Scenario::Symmetric, 1.0, true);
        assert_eq!(p.physicality_mode, PhysicalityMode::StrictLiteral);
        assert_eq!(p.topology.bob_side_efficiency, 1.0);
    }
}
