//! Asymptotic key rates under one-mode collective attacks.

use serde::{Deserialize, Serialize};

use crate::channel::{
    ensure_physical, equivalent_channel, fiber_transmittance, EquivalentChannel, GainChoice,
    LinkParams, PhysicalityMode, Topology, DEFAULT_ATTENUATION_DB_PER_KM,
};
use crate::error::{domain, Error, Result};
use crate::gaussian::{
    condition_on_homodyne_x, entropy_g, epr_covariance, shared_covariance,
    single_mode_symplectic, symplectic_eigenvalues, CovMatrix2Mode,
};

/// Where the per-link transmittances and noises come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LinkModel {
    /// Fiber loss from the topology; excess noise constant per link, p mirrors x.
    Fiber { eps_a: f64, eps_b: f64 },
    /// Explicit per-quadrature parameters. The topology then only feeds the PLOB bound.
    Explicit(LinkParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Modulation variance `V_m` of the single modulated quadrature, SNU.
    pub modulation_variance: f64,
    /// Reconciliation efficiency.
    pub beta: f64,
    pub topology: Topology,
    pub links: LinkModel,
    pub physicality_mode: PhysicalityMode,
}

impl ProtocolConfig {
    /// Relay midway, `V_m = 100`, `beta = 0.98`, `eps = 0.002`, 0.2 dB/km.
    pub fn symmetric(total_km: f64) -> Self {
        Self {
            modulation_variance: 100.0,
            beta: 0.98,
            topology: Topology::symmetric(total_km, DEFAULT_ATTENUATION_DB_PER_KM),
            links: LinkModel::Fiber {
                eps_a: 0.002,
                eps_b: 0.002,
            },
            physicality_mode: PhysicalityMode::Corrected,
        }
    }

    /// Relay next to B with 98% efficiency on B's side; other defaults as [`Self::symmetric`].
    pub fn asymmetric(l_ac_km: f64) -> Self {
        Self {
            topology: Topology::asymmetric(l_ac_km, DEFAULT_ATTENUATION_DB_PER_KM, 0.98),
            ..Self::symmetric(0.0)
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_modulation_variance(mut self, vm: f64) -> Self {
        self.modulation_variance = vm;
        self
    }

    /// Source variance `V = sqrt(V_m + 1)` of the squeezed entangled source.
    pub fn source_variance(&self) -> f64 {
        (self.modulation_variance + 1.0).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.modulation_variance > 0.0) || !self.modulation_variance.is_finite() {
            return domain(format!(
                "modulation variance must be > 0, got {}",
                self.modulation_variance
            ));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return domain(format!("beta must lie in (0, 1], got {}", self.beta));
        }
        self.topology.validate()
    }

    pub fn link_params(&self) -> Result<LinkParams> {
        match self.links {
            LinkModel::Fiber { eps_a, eps_b } => self.topology.links(eps_a, eps_b),
            LinkModel::Explicit(links) => {
                links.validate()?;
                Ok(links)
            }
        }
    }
}

/// Key rate in bits per pulse with every intermediate kept for inspection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeyRateResult {
    /// `max(0, raw_key_rate)`.
    pub key_rate: f64,
    /// Unclamped `beta * I - chi`.
    pub raw_key_rate: f64,
    pub mutual_info: f64,
    pub holevo: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub equivalent_channel: EquivalentChannel,
}

/// Mutual information in bits for the unidimensional protocol, closed form.
pub fn mutual_information_ud(v: f64, t_x: f64, eps_prime_x: f64) -> Result<f64> {
    if !(v >= 1.0) || !(t_x >= 0.0) || !(eps_prime_x >= 0.0) {
        return domain(format!(
            "mutual information needs V >= 1, T >= 0, eps' >= 0; got V={v}, T={t_x}, eps'={eps_prime_x}"
        ));
    }
    let s = v * v - 1.0;
    let explained = t_x * v * s / (t_x * (s + eps_prime_x) + 1.0);
    let conditional = v - explained;
    if !(conditional > 0.0) {
        return Err(Error::Numerical(format!(
            "conditional variance {conditional} is not positive"
        )));
    }
    Ok(0.5 * (v / conditional).log2())
}

/// Mutual information in bits from the homodyne-conditioned x variance of mode A.
pub fn mutual_information_homodyne(cov: &CovMatrix2Mode) -> Result<f64> {
    let conditional = condition_on_homodyne_x(cov)[(0, 0)];
    let ratio = cov.get(0, 0) / conditional;
    if !(conditional > 0.0) || !(ratio > 0.0) {
        return Err(Error::Numerical(format!(
            "conditional variance {conditional} is not positive"
        )));
    }
    Ok(0.5 * ratio.log2())
}

#[derive(Debug, Clone, Copy)]
struct HolevoTerms {
    chi: f64,
    lambda1: f64,
    lambda2: f64,
    lambda3: f64,
}

fn holevo_terms(cov: &CovMatrix2Mode) -> Result<HolevoTerms> {
    let spectrum = symplectic_eigenvalues(cov);
    let lambda3 = single_mode_symplectic(&condition_on_homodyne_x(cov));
    let chi = entropy_g(spectrum.nu1)? + entropy_g(spectrum.nu2)? - entropy_g(lambda3)?;
    Ok(HolevoTerms {
        chi,
        lambda1: spectrum.nu1,
        lambda2: spectrum.nu2,
        lambda3,
    })
}

/// Eve's Holevo information on the receiver's homodyne outcome, bits.
pub fn holevo_bound(v: f64, ch: &EquivalentChannel) -> Result<f64> {
    Ok(holevo_terms(&shared_covariance(v, ch)?)?.chi)
}

fn assemble(beta: f64, mutual_info: f64, terms: HolevoTerms, ch: EquivalentChannel) -> KeyRateResult {
    let raw = beta * mutual_info - terms.chi;
    KeyRateResult {
        key_rate: raw.max(0.0),
        raw_key_rate: raw,
        mutual_info,
        holevo: terms.chi,
        lambda1: terms.lambda1,
        lambda2: terms.lambda2,
        lambda3: terms.lambda3,
        equivalent_channel: ch,
    }
}

/// Unidimensional key rate for explicit link parameters at the optimal gain.
pub fn key_rate_ud_for_links(
    links: &LinkParams,
    modulation_variance: f64,
    beta: f64,
    mode: PhysicalityMode,
) -> Result<KeyRateResult> {
    ensure_physical(links, mode)?;
    let ch = equivalent_channel(links, modulation_variance, GainChoice::Optimal)?;
    let v = (modulation_variance + 1.0).sqrt();
    let cov = shared_covariance(v, &ch)?;
    let mutual_info = mutual_information_ud(v, ch.t_x, ch.eps_prime_x)?;
    Ok(assemble(beta, mutual_info, holevo_terms(&cov)?, ch))
}

/// Asymptotic key rate of the unidimensional MDI protocol.
pub fn key_rate_ud(cfg: &ProtocolConfig) -> Result<KeyRateResult> {
    cfg.validate()?;
    key_rate_ud_for_links(
        &cfg.link_params()?,
        cfg.modulation_variance,
        cfg.beta,
        cfg.physicality_mode,
    )
}

/// Baseline: both quadratures Gaussian-modulated with variance `V_m`, same
/// equivalent channel applied to x and p, homodyne detection, reverse reconciliation.
pub fn key_rate_symmetric_gm(cfg: &ProtocolConfig) -> Result<KeyRateResult> {
    cfg.validate()?;
    let links = cfg.link_params()?;
    ensure_physical(&links, cfg.physicality_mode)?;
    let ch = equivalent_channel(&links, cfg.modulation_variance, GainChoice::Optimal)?;
    let v = cfg.modulation_variance + 1.0;
    let cov = epr_covariance(v, ch.t_x, ch.eps_prime_x)?;
    let mutual_info = mutual_information_homodyne(&cov)?;
    Ok(assemble(cfg.beta, mutual_info, holevo_terms(&cov)?, ch))
}

/// Repeaterless secret-key capacity `-log2(1 - T)`; infinite at `T = 1`.
pub fn plob_bound(transmittance: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&transmittance) {
        return domain(format!("transmittance must lie in [0, 1], got {transmittance}"));
    }
    if transmittance == 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-(-transmittance).ln_1p() / std::f64::consts::LN_2)
}

/// PLOB bound over the end-to-end fiber of `topology`.
pub fn plob_bound_for(topology: &Topology) -> Result<f64> {
    plob_bound(fiber_transmittance(topology.total_length(), topology.alpha)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModulationOptimum {
    pub modulation_variance: f64,
    pub key_rate: f64,
    /// Set when every evaluated point had zero key rate; `modulation_variance` is then the range maximum.
    pub all_zero: bool,
}

const SCAN_POINTS: usize = 65;
const GOLDEN_REL_TOL: f64 = 1e-6;

/// Maximizes the unidimensional key rate over `V_m` in `[v_min, v_max]`.
///
/// Log-spaced scan to bracket the peak, then golden-section refinement in
/// `log V_m`. Deterministic for a given configuration.
pub fn optimize_modulation(cfg: &ProtocolConfig, v_min: f64, v_max: f64) -> Result<ModulationOptimum> {
    if !(v_min > 0.0) || !(v_max >= v_min) || !v_max.is_finite() {
        return domain(format!("invalid modulation range [{v_min}, {v_max}]"));
    }
    let rate = |ln_vm: f64| -> Result<f64> {
        Ok(key_rate_ud(&cfg.with_modulation_variance(ln_vm.exp()))?.key_rate)
    };
    let (lo, hi) = (v_min.ln(), v_max.ln());
    let nodes: Vec<f64> = (0..SCAN_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (SCAN_POINTS - 1) as f64)
        .collect();
    let values = nodes.iter().map(|&x| rate(x)).collect::<Result<Vec<_>>>()?;
    let (best, &best_rate) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .expect("scan is non-empty");
    if best_rate <= 0.0 {
        return Ok(ModulationOptimum {
            modulation_variance: v_max,
            key_rate: 0.0,
            all_zero: true,
        });
    }

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = nodes[best.saturating_sub(1)];
    let mut b = nodes[(best + 1).min(SCAN_POINTS - 1)];
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (rate(c)?, rate(d)?);
    while (b - a) > GOLDEN_REL_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = rate(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = rate(d)?;
        }
    }
    let (x, fx) = [(nodes[best], best_rate), (c, fc), (d, fd)]
        .into_iter()
        .fold((nodes[best], best_rate), |acc, p| if p.1 > acc.1 { p } else { acc });
    Ok(ModulationOptimum {
        modulation_variance: x.exp().clamp(v_min, v_max),
        key_rate: fx,
        all_zero: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn channel(t: f64, eps: f64) -> EquivalentChannel {
        EquivalentChannel {
            t_x: t,
            eps_prime_x: eps,
            t_p: t,
            eps_prime_p: eps,
            gain_sq: 2.0,
        }
    }

    #[test]
    fn mutual_information_examples() {
        let v = 101f64.sqrt();
        assert_eq!(mutual_information_ud(v, 0.0, 0.004).unwrap(), 0.0);
        let i = mutual_information_ud(v, 100.0 / 102.0, 0.004).unwrap();
        assert_relative_eq!(i, 3.312_169_272_656_492_5, epsilon = 1e-12);
        assert!(mutual_information_ud(v, 0.5, 1e300).unwrap() < 1e-250);
        assert!(mutual_information_ud(0.5, 0.5, 0.0).is_err());
    }

    #[test]
    fn mutual_information_routes_agree() {
        let v = 101f64.sqrt();
        let ch = channel(100.0 / 102.0, 0.004);
        let cov = shared_covariance(v, &ch).unwrap();
        let a = mutual_information_ud(v, ch.t_x, ch.eps_prime_x).unwrap();
        let b = mutual_information_homodyne(&cov).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn holevo_limits() {
        let v = 101f64.sqrt();
        assert!(holevo_bound(v, &channel(0.0, 0.0)).unwrap().abs() <= 1e-9);
        assert!(holevo_bound(v, &channel(0.0, 0.7)).unwrap().abs() <= 1e-9);
        assert!(holevo_bound(v, &channel(1.0, 0.0)).unwrap().abs() <= 1e-9);

        let ch = channel(100.0 / 102.0, 0.004);
        let chi = holevo_bound(v, &ch).unwrap();
        let i = mutual_information_ud(v, ch.t_x, ch.eps_prime_x).unwrap();
        assert!(chi > 0.0 && chi < i);
    }

    #[test]
    fn plob_values() {
        assert_relative_eq!(plob_bound(0.5).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(plob_bound(0.0).unwrap(), 0.0);
        assert_eq!(plob_bound(1.0).unwrap(), f64::INFINITY);
        let t = fiber_transmittance(22.0, 0.2).unwrap();
        assert_relative_eq!(plob_bound(t).unwrap(), 0.650_811_513_818_016_5, epsilon = 1e-12);
        assert!(plob_bound(1.5).is_err());
    }

    #[test]
    fn reference_points_are_positive() {
        assert!(key_rate_ud(&ProtocolConfig::symmetric(5.0)).unwrap().key_rate > 0.0);
        assert!(key_rate_ud(&ProtocolConfig::asymmetric(22.0)).unwrap().key_rate > 0.0);
        let far = key_rate_ud(&ProtocolConfig::symmetric(500.0)).unwrap();
        assert_eq!(far.key_rate, 0.0);
        assert!(far.raw_key_rate < 0.0);
    }

    #[test]
    fn result_is_internally_consistent() {
        let r = key_rate_ud(&ProtocolConfig::symmetric(3.0)).unwrap();
        assert_relative_eq!(r.raw_key_rate, 0.98 * r.mutual_info - r.holevo, epsilon = 1e-15);
        assert!(r.lambda1 >= r.lambda2 && r.lambda2 >= 1.0);
    }

    #[test]
    fn nonphysical_links_are_rejected() {
        let mut cfg = ProtocolConfig::symmetric(2.0);
        cfg.links = LinkModel::Explicit(LinkParams {
            eta_a_x: 0.1,
            eps_a_x: 0.01,
            eta_b_x: 0.9,
            eps_b_x: 0.01,
            eta_a_p: 1.0,
            eps_a_p: 0.0,
            eta_b_p: 0.9,
            eps_b_p: 0.01,
        });
        assert!(matches!(key_rate_ud(&cfg), Err(Error::Nonphysical(_))));

        let strict = ProtocolConfig {
            physicality_mode: PhysicalityMode::StrictLiteral,
            ..ProtocolConfig::symmetric(2.0)
        };
        assert!(matches!(key_rate_ud(&strict), Err(Error::Nonphysical(_))));
    }

    #[test]
    fn gm_baseline_edges() {
        assert!(key_rate_symmetric_gm(&ProtocolConfig::symmetric(0.0)).unwrap().key_rate > 0.0);
        let far = key_rate_symmetric_gm(&ProtocolConfig::symmetric(800.0)).unwrap();
        assert_eq!(far.key_rate, 0.0);
    }

    #[test]
    fn modulation_optimum() {
        let cfg = ProtocolConfig::symmetric(3.0);
        let opt = optimize_modulation(&cfg, 1.0, 300.0).unwrap();
        let k100 = key_rate_ud(&cfg).unwrap().key_rate;
        let k10 = key_rate_ud(&cfg.with_modulation_variance(10.0)).unwrap().key_rate;
        assert!(k100 >= k10);
        assert!(opt.key_rate >= k100);
        assert!(!opt.all_zero);

        let asym = ProtocolConfig::asymmetric(10.0);
        let opt = optimize_modulation(&asym, 1.0, 300.0).unwrap();
        let k1 = key_rate_ud(&asym.with_modulation_variance(1.0)).unwrap().key_rate;
        assert!(opt.key_rate > k1);

        let dark = optimize_modulation(&ProtocolConfig::symmetric(1000.0), 1.0, 300.0).unwrap();
        assert!(dark.all_zero);
        assert_eq!((dark.modulation_variance, dark.key_rate), (300.0, 0.0));
        assert!(optimize_modulation(&cfg, 0.0, 10.0).is_err());
    }
}
