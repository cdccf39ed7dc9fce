//! Parameter sweeps, figure presets, and maximum-distance search.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::Topology;
use crate::error::{domain, Error, Result};
use crate::finite_size::{finite_size_key_rate, FiniteSizeConfig};
use crate::keyrate::{key_rate_symmetric_gm, key_rate_ud, plob_bound_for, ProtocolConfig};

/// Relay placement for a given distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// `L_AC = L_BC = L / 2`.
    Symmetric,
    /// `L_AC = L`, `L_BC = 0`.
    Asymmetric,
}

impl Scenario {
    /// `base` moved to distance `km`, keeping its attenuation and (asymmetric only) B-side efficiency.
    pub fn at_distance(self, base: &ProtocolConfig, km: f64) -> ProtocolConfig {
        let alpha = base.topology.alpha;
        let topology = match self {
            Scenario::Symmetric => Topology::symmetric(km, alpha),
            Scenario::Asymmetric => Topology::asymmetric(km, alpha, base.topology.bob_side_efficiency),
        };
        ProtocolConfig { topology, ..*base }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Distance,
    ModulationVariance,
    BlockLength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Explicit(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Grid {
    /// Grid points; non-empty and strictly increasing.
    pub fn values(&self) -> Result<Vec<f64>> {
        let values = match *self {
            Grid::Explicit(ref v) => v.clone(),
            Grid::Range { start, stop, step } => {
                if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
                    return domain(format!("invalid range start={start} stop={stop} step={step}"));
                }
                let count = ((stop - start) / step + 1e-9).floor() as usize;
                (0..=count).map(|i| start + step * i as f64).collect()
            }
        };
        if values.is_empty() {
            return domain("sweep grid is empty");
        }
        if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[0] >= w[1]) {
            return domain("sweep grid must be finite and strictly increasing");
        }
        Ok(values)
    }
}

/// One labeled curve: overrides applied on top of the sweep's base configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Curve {
    pub label: String,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub distance: Option<f64>,
    #[serde(default)]
    pub modulation_variance: Option<f64>,
}

/// Finite-size columns: one key rate per block length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteSizeColumns {
    pub block_lengths: Vec<f64>,
    /// `n / N`.
    pub key_fraction: f64,
    pub eps_pe: f64,
    pub eps_pa: f64,
    pub eps_smooth: f64,
}

impl FiniteSizeColumns {
    pub fn reference(block_lengths: Vec<f64>) -> Self {
        Self {
            block_lengths,
            key_fraction: 0.5,
            eps_pe: 1e-10,
            eps_pa: 1e-10,
            eps_smooth: 1e-10,
        }
    }

    pub fn config(&self, block_length: f64) -> Result<FiniteSizeConfig> {
        FiniteSizeConfig::new(
            block_length,
            self.key_fraction * block_length,
            self.eps_pe,
            self.eps_pa,
            self.eps_smooth,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub grid: Grid,
    pub scenario: Scenario,
    pub base: ProtocolConfig,
    /// Total distance used when distance is not the swept variable, km.
    pub distance: f64,
    pub curves: Vec<Curve>,
    pub finite_size: Option<FiniteSizeColumns>,
}

impl SweepSpec {
    fn validate(&self) -> Result<Vec<f64>> {
        let grid = self.grid.values()?;
        if self.curves.is_empty() {
            return domain("sweep needs at least one curve");
        }
        if self.variable == SweepVariable::BlockLength && self.finite_size.is_none() {
            return domain("block-length sweeps need finite-size settings");
        }
        Ok(grid)
    }

    fn point_config(&self, curve: &Curve, value: f64) -> ProtocolConfig {
        let mut distance = curve.distance.unwrap_or(self.distance);
        let mut base = self.base;
        if let Some(b) = curve.beta {
            base.beta = b;
        }
        if let Some(vm) = curve.modulation_variance {
            base.modulation_variance = vm;
        }
        match self.variable {
            SweepVariable::Distance => distance = value,
            SweepVariable::ModulationVariance => base.modulation_variance = value,
            SweepVariable::BlockLength => {}
        }
        self.scenario.at_distance(&base, distance)
    }

    fn block_lengths(&self, value: f64) -> Vec<f64> {
        match (self.variable, &self.finite_size) {
            (SweepVariable::BlockLength, _) => vec![value],
            (_, Some(fs)) => fs.block_lengths.clone(),
            (_, None) => Vec::new(),
        }
    }

    /// CSV header, with units in parentheses.
    pub fn columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = [
            "curve",
            "distance (km)",
            "modulation_variance (SNU)",
            "beta",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        if self.variable == SweepVariable::BlockLength {
            cols.push("block_length (signals)".into());
        }
        cols.extend(
            [
                "physical",
                "key_rate_ud (bits/pulse)",
                "key_rate_ud_signed (bits/pulse)",
                "key_rate_gm (bits/pulse)",
                "plob (bits/pulse)",
                "mutual_info (bits)",
                "holevo (bits)",
            ]
            .iter()
            .map(|s| s.to_string()),
        );
        match (self.variable, &self.finite_size) {
            (SweepVariable::BlockLength, _) => cols.push("key_rate_finite (bits/pulse)".into()),
            (_, Some(fs)) => cols.extend(
                fs.block_lengths
                    .iter()
                    .map(|n| format!("key_rate_finite_N={n:e} (bits/pulse)")),
            ),
            (_, None) => {}
        }
        cols
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub curve: String,
    pub distance: f64,
    pub modulation_variance: f64,
    pub beta: f64,
    pub block_length: Option<f64>,
    pub physical: bool,
    pub key_rate_ud: Option<f64>,
    pub key_rate_ud_signed: Option<f64>,
    pub key_rate_gm: Option<f64>,
    pub plob: f64,
    pub mutual_info: Option<f64>,
    pub holevo: Option<f64>,
    /// One entry per block length; `None` where estimation failed or the point is nonphysical.
    pub key_rate_finite: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub columns: Vec<String>,
    pub rows: Vec<SweepRow>,
    pub has_block_length: bool,
}

impl SweepTable {
    pub fn nonphysical_rows(&self) -> usize {
        self.rows.iter().filter(|r| !r.physical).count()
    }

    /// Writes the table as CSV with 10 significant digits per float.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.columns.iter().map(|c| csv_field(c)).collect::<Vec<_>>().join(","))?;
        for r in &self.rows {
            let mut fields = vec![
                csv_field(&r.curve),
                fmt_float(r.distance),
                fmt_float(r.modulation_variance),
                fmt_float(r.beta),
            ];
            if self.has_block_length {
                fields.push(fmt_opt(r.block_length));
            }
            fields.push(r.physical.to_string());
            fields.extend([
                fmt_opt(r.key_rate_ud),
                fmt_opt(r.key_rate_ud_signed),
                fmt_opt(r.key_rate_gm),
                fmt_float(r.plob),
                fmt_opt(r.mutual_info),
                fmt_opt(r.holevo),
            ]);
            fields.extend(r.key_rate_finite.iter().map(|v| fmt_opt(*v)));
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Ten significant digits in scientific notation; `inf` for unbounded values.
pub fn fmt_float(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else if v.is_nan() {
        String::new()
    } else {
        format!("{v:.9e}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

fn check_plob(rate: f64, bound: f64, what: &str, cfg: &ProtocolConfig) -> Result<()> {
    if rate > bound {
        return Err(Error::PlobViolation {
            rate,
            bound,
            at: format!("{what}, L={} km", cfg.topology.total_length()),
        });
    }
    Ok(())
}

fn evaluate(spec: &SweepSpec, curve: &Curve, value: f64) -> Result<SweepRow> {
    let cfg = spec.point_config(curve, value);
    let plob = plob_bound_for(&cfg.topology)?;
    let blocks = spec.block_lengths(value);
    let mut row = SweepRow {
        curve: curve.label.clone(),
        distance: cfg.topology.total_length(),
        modulation_variance: cfg.modulation_variance,
        beta: cfg.beta,
        block_length: (spec.variable == SweepVariable::BlockLength).then_some(value),
        physical: true,
        key_rate_ud: None,
        key_rate_ud_signed: None,
        key_rate_gm: None,
        plob,
        mutual_info: None,
        holevo: None,
        key_rate_finite: vec![None; blocks.len()],
    };
    let ud = match key_rate_ud(&cfg) {
        Ok(r) => r,
        Err(Error::Nonphysical(_)) => {
            row.physical = false;
            return Ok(row);
        }
        Err(e) => return Err(e),
    };
    let gm = key_rate_symmetric_gm(&cfg)?;
    check_plob(ud.key_rate, plob, "unidimensional rate", &cfg)?;
    check_plob(gm.key_rate, plob, "Gaussian-modulation rate", &cfg)?;
    row.key_rate_ud = Some(ud.key_rate);
    row.key_rate_ud_signed = Some(ud.raw_key_rate);
    row.key_rate_gm = Some(gm.key_rate);
    row.mutual_info = Some(ud.mutual_info);
    row.holevo = Some(ud.holevo);
    if let Some(fs) = &spec.finite_size {
        for (slot, &n) in row.key_rate_finite.iter_mut().zip(&blocks) {
            match finite_size_key_rate(&cfg, &fs.config(n)?, None) {
                Ok(r) => {
                    check_plob(r.key_rate, plob, "finite-size rate", &cfg)?;
                    *slot = Some(r.key_rate);
                }
                Err(Error::Estimation(_)) | Err(Error::Nonphysical(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(row)
}

/// Evaluates every (curve, grid point) pair; rows come out curve-major in grid order.
///
/// `threads` sets the worker-pool width; `None` uses the global rayon pool.
pub fn run_sweep(spec: &SweepSpec, threads: Option<usize>) -> Result<SweepTable> {
    let grid = spec.validate()?;
    let points: Vec<(&Curve, f64)> = spec
        .curves
        .iter()
        .flat_map(|c| grid.iter().map(move |&v| (c, v)))
        .collect();
    let work = || {
        points
            .par_iter()
            .map(|&(c, v)| evaluate(spec, c, v))
            .collect::<Result<Vec<_>>>()
    };
    let rows = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Contract(format!("cannot build worker pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    Ok(SweepTable {
        columns: spec.columns(),
        rows,
        has_block_length: spec.variable == SweepVariable::BlockLength,
    })
}

/// Which rate the maximum-distance search tracks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateKind {
    Unidimensional,
    SymmetricGm,
    FiniteSize(FiniteSizeConfig),
}

pub const DEFAULT_RESOLUTION_KM: f64 = 0.01;
const MAX_SEARCH_KM: f64 = 10_000.0;

fn signed_rate(cfg: &ProtocolConfig, kind: RateKind) -> Result<f64> {
    match kind {
        RateKind::Unidimensional => Ok(key_rate_ud(cfg)?.raw_key_rate),
        RateKind::SymmetricGm => Ok(key_rate_symmetric_gm(cfg)?.raw_key_rate),
        RateKind::FiniteSize(fcfg) => match finite_size_key_rate(cfg, &fcfg, None) {
            Ok(r) => Ok(r.raw_key_rate),
            // Estimation breaking down means no key.
            Err(Error::Estimation(_)) => Ok(f64::NEG_INFINITY),
            Err(e) => Err(e),
        },
    }
}

/// Largest distance with a positive rate, by bisection on the signed rate to `resolution_km`.
pub fn max_distance(
    cfg: &ProtocolConfig,
    scenario: Scenario,
    kind: RateKind,
    resolution_km: f64,
) -> Result<f64> {
    if !(resolution_km > 0.0) {
        return domain(format!("resolution must be > 0, got {resolution_km}"));
    }
    let rate = |km: f64| signed_rate(&scenario.at_distance(cfg, km), kind);
    let at_zero = rate(0.0)?;
    if at_zero <= 0.0 {
        return Err(Error::NoRange(at_zero));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while rate(hi)? > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > MAX_SEARCH_KM {
            return domain(format!("key rate still positive beyond {MAX_SEARCH_KM} km"));
        }
    }
    while hi - lo > resolution_km {
        let mid = 0.5 * (lo + hi);
        if rate(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 6] = ["fig4", "fig5", "fig6", "fig7", "fig8", "fig9"];

/// Block lengths of the finite-size presets.
pub const PRESET_BLOCK_LENGTHS: [f64; 4] = [1e6, 1e7, 1e8, 1e9];

fn distance_curves(distances: &[f64]) -> Vec<Curve> {
    distances
        .iter()
        .map(|&d| Curve {
            label: format!("L={d}km"),
            distance: Some(d),
            ..Curve::default()
        })
        .collect()
}

fn beta_curves(betas: &[f64]) -> Vec<Curve> {
    betas
        .iter()
        .map(|&b| Curve {
            label: format!("beta={b}"),
            beta: Some(b),
            ..Curve::default()
        })
        .collect()
}

/// Sweeps reproducing the reference figures: `V_m = 100` (except where swept),
/// `beta = 0.98`, `eps = 0.002` on both links, 0.2 dB/km, 98% B-side efficiency
/// in the asymmetric scenario.
pub fn preset(name: &str) -> Option<SweepSpec> {
    let sym = ProtocolConfig::symmetric(0.0);
    let asym = ProtocolConfig::asymmetric(0.0);
    let spec = match name {
        "fig4" => SweepSpec {
            variable: SweepVariable::ModulationVariance,
            grid: Grid::Range { start: 1.0, stop: 300.0, step: 1.0 },
            scenario: Scenario::Symmetric,
            base: sym,
            distance: 0.0,
            curves: distance_curves(&[2.0, 3.0, 4.0, 5.0]),
            finite_size: None,
        },
        "fig5" => SweepSpec {
            variable: SweepVariable::ModulationVariance,
            grid: Grid::Range { start: 1.0, stop: 300.0, step: 1.0 },
            scenario: Scenario::Asymmetric,
            base: asym,
            distance: 0.0,
            curves: distance_curves(&[10.0, 13.0, 16.0, 20.0, 22.0]),
            finite_size: None,
        },
        "fig6" => SweepSpec {
            variable: SweepVariable::Distance,
            grid: Grid::Range { start: 0.0, stop: 14.0, step: 0.1 },
            scenario: Scenario::Symmetric,
            base: sym,
            distance: 0.0,
            curves: beta_curves(&[0.96, 0.98]),
            finite_size: None,
        },
        "fig7" => SweepSpec {
            variable: SweepVariable::Distance,
            grid: Grid::Range { start: 0.0, stop: 48.0, step: 0.2 },
            scenario: Scenario::Asymmetric,
            base: asym,
            distance: 0.0,
            curves: beta_curves(&[0.96, 0.98]),
            finite_size: None,
        },
        "fig8" => SweepSpec {
            variable: SweepVariable::Distance,
            grid: Grid::Range { start: 0.0, stop: 8.0, step: 0.05 },
            scenario: Scenario::Symmetric,
            base: sym,
            distance: 0.0,
            curves: beta_curves(&[0.98]),
            finite_size: Some(FiniteSizeColumns::reference(PRESET_BLOCK_LENGTHS.to_vec())),
        },
        "fig9" => SweepSpec {
            variable: SweepVariable::Distance,
            grid: Grid::Range { start: 0.0, stop: 25.0, step: 0.1 },
            scenario: Scenario::Asymmetric,
            base: asym,
            distance: 0.0,
            curves: beta_curves(&[0.98]),
            finite_size: Some(FiniteSizeColumns::reference(PRESET_BLOCK_LENGTHS.to_vec())),
        },
        _ => return None,
    };
    Some(spec)
}
