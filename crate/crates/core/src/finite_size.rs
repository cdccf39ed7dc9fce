//! Finite-size key rates: confidence intervals on the estimated links and the
//! privacy-amplification penalty.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use crate::channel::{LinkParams, PhysicalityMode};
use crate::error::{domain, Error, Result};
use crate::keyrate::{key_rate_ud_for_links, KeyRateResult, ProtocolConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteSizeConfig {
    /// Total number of exchanged signals `N`.
    pub block_length: f64,
    /// Signals kept for key generation `n`; the remaining `m = N - n` go to estimation.
    pub key_length: f64,
    pub eps_pe: f64,
    pub eps_pa: f64,
    pub eps_smooth: f64,
    /// Two-sided normal quantile `z_{eps_PE/2}`.
    pub z_quantile: f64,
}

impl FiniteSizeConfig {
    /// Half of the block for the key and all failure probabilities at 1e-10.
    pub fn half_split(block_length: f64) -> Result<Self> {
        Self::new(block_length, 0.5 * block_length, 1e-10, 1e-10, 1e-10)
    }

    pub fn new(
        block_length: f64,
        key_length: f64,
        eps_pe: f64,
        eps_pa: f64,
        eps_smooth: f64,
    ) -> Result<Self> {
        let cfg = Self {
            block_length,
            key_length,
            eps_pe,
            eps_pa,
            eps_smooth,
            z_quantile: normal_quantile_two_sided(eps_pe)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn estimation_length(&self) -> f64 {
        self.block_length - self.key_length
    }

    pub fn key_fraction(&self) -> f64 {
        self.key_length / self.block_length
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.key_length >= 1.0) || !(self.block_length > self.key_length) {
            return domain(format!(
                "need 1 <= n < N, got n={} N={}",
                self.key_length, self.block_length
            ));
        }
        if self.estimation_length() < 2.0 {
            return domain(format!(
                "estimation needs m >= 2 signals, got {}",
                self.estimation_length()
            ));
        }
        for (name, eps) in [
            ("eps_pe", self.eps_pe),
            ("eps_pa", self.eps_pa),
            ("eps_smooth", self.eps_smooth),
        ] {
            if !(eps > 0.0 && eps < 1.0) {
                return domain(format!("{name} must lie in (0, 1), got {eps}"));
            }
        }
        if !(self.z_quantile > 0.0) {
            return domain(format!("z quantile must be > 0, got {}", self.z_quantile));
        }
        Ok(())
    }
}

/// `z` with `P(|Z| > z) = eps` for a standard normal `Z`.
pub fn normal_quantile_two_sided(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps <= 1.0) {
        return domain(format!("failure probability must lie in (0, 1], got {eps}"));
    }
    Ok(std::f64::consts::SQRT_2 * erfc_inv(eps))
}

/// Privacy-amplification correction `Delta(n)` in bits.
pub fn delta_n(n: f64, eps_smooth: f64, eps_pa: f64) -> Result<f64> {
    if !(n >= 1.0) {
        return domain(format!("key length must be >= 1, got {n}"));
    }
    if !(eps_smooth > 0.0 && eps_smooth < 1.0) || !(eps_pa > 0.0 && eps_pa < 1.0) {
        return domain(format!(
            "epsilons must lie in (0, 1), got smooth={eps_smooth} pa={eps_pa}"
        ));
    }
    Ok(7.0 * ((2.0 / eps_smooth).log2() / n).sqrt() + 2.0 / n * (1.0 / eps_pa).log2())
}

/// Half-widths `(Delta t', Delta sigma'^2)` of the estimation confidence intervals.
///
/// `sum x_i^2` is replaced by its expectation `m V_m`.
pub fn confidence_bounds(m: f64, modulation_variance: f64, sigma2_hat: f64, z: f64) -> Result<(f64, f64)> {
    if !(m >= 2.0) {
        return domain(format!("estimation needs m >= 2, got {m}"));
    }
    if !(modulation_variance > 0.0) || !(sigma2_hat > 0.0) || !(z >= 0.0) {
        return domain(format!(
            "need V_m > 0, sigma^2 > 0, z >= 0; got {modulation_variance}, {sigma2_hat}, {z}"
        ));
    }
    let dt = z * (sigma2_hat / (m * modulation_variance)).sqrt();
    let ds = z * sigma2_hat * (2.0 / m).sqrt();
    Ok((dt, ds))
}

/// Point estimates and interval half-widths for one link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkEstimate {
    /// Amplitude transmission `t' = sqrt(eta)`.
    pub t_hat: f64,
    /// Noise variance `sigma'^2 = 1 + eta eps`, SNU.
    pub sigma2_hat: f64,
    pub delta_t: f64,
    pub delta_sigma2: f64,
}

impl LinkEstimate {
    /// Estimate with model-true values and the half-widths `fcfg` implies.
    pub fn from_model(eta: f64, eps: f64, modulation_variance: f64, fcfg: &FiniteSizeConfig) -> Result<Self> {
        let t_hat = eta.sqrt();
        let sigma2_hat = 1.0 + eta * eps;
        let (delta_t, delta_sigma2) = confidence_bounds(
            fcfg.estimation_length(),
            modulation_variance,
            sigma2_hat,
            fcfg.z_quantile,
        )?;
        Ok(Self {
            t_hat,
            sigma2_hat,
            delta_t,
            delta_sigma2,
        })
    }

    /// Lower transmittance and higher excess noise at the interval edges: `(eta, eps, eps_clamped)`.
    fn worst_case(&self, name: &str) -> Result<(f64, f64, bool)> {
        if self.delta_t < 0.0 || self.delta_sigma2 < 0.0 {
            return domain(format!("link {name}: half-widths must be >= 0"));
        }
        let t = self.t_hat - self.delta_t;
        if !(t > 0.0) {
            return Err(Error::Estimation(format!(
                "link {name}: t_hat - delta_t = {t} is not positive"
            )));
        }
        let eta = t * t;
        if eta > 1.0 {
            return Err(Error::Estimation(format!(
                "link {name}: worst-case transmittance {eta} exceeds 1"
            )));
        }
        let eps = (self.sigma2_hat + self.delta_sigma2 - 1.0) / eta;
        Ok((eta, eps.max(0.0), eps < 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatedChannel {
    pub alice: LinkEstimate,
    pub bob: LinkEstimate,
}

impl EstimatedChannel {
    /// Simulation mode: estimates sit at the true values of `links`' x quadratures.
    pub fn from_model(links: &LinkParams, modulation_variance: f64, fcfg: &FiniteSizeConfig) -> Result<Self> {
        Ok(Self {
            alice: LinkEstimate::from_model(links.eta_a_x, links.eps_a_x, modulation_variance, fcfg)?,
            bob: LinkEstimate::from_model(links.eta_b_x, links.eps_b_x, modulation_variance, fcfg)?,
        })
    }

    /// Same point estimates with zero-width intervals.
    pub fn without_intervals(&self) -> Self {
        let strip = |l: LinkEstimate| LinkEstimate {
            delta_t: 0.0,
            delta_sigma2: 0.0,
            ..l
        };
        Self {
            alice: strip(self.alice),
            bob: strip(self.bob),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorstCase {
    pub links: LinkParams,
    /// Set when a negative excess-noise estimate was raised to zero.
    pub noise_clamped: bool,
}

/// Worst-case link parameters; p quadratures mirror x.
pub fn worst_case_channel(est: &EstimatedChannel) -> Result<WorstCase> {
    let (eta_a, eps_a, clamp_a) = est.alice.worst_case("A")?;
    let (eta_b, eps_b, clamp_b) = est.bob.worst_case("B")?;
    Ok(WorstCase {
        links: LinkParams::symmetric(eta_a, eps_a, eta_b, eps_b)?,
        noise_clamped: clamp_a || clamp_b,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiniteSizeResult {
    /// `(n/N) * max(0, beta I - chi - Delta(n))`.
    pub key_rate: f64,
    /// Same without the clamp.
    pub raw_key_rate: f64,
    pub delta: f64,
    pub key_fraction: f64,
    pub worst_case: WorstCase,
    /// Asymptotic-formula terms evaluated at the worst-case links.
    pub asymptotic_terms: KeyRateResult,
}

/// Finite-size key rate from explicit estimates.
pub fn finite_size_key_rate_with_estimate(
    modulation_variance: f64,
    beta: f64,
    mode: PhysicalityMode,
    fcfg: &FiniteSizeConfig,
    est: &EstimatedChannel,
) -> Result<FiniteSizeResult> {
    fcfg.validate()?;
    let worst = worst_case_channel(est)?;
    let terms = key_rate_ud_for_links(&worst.links, modulation_variance, beta, mode)?;
    let delta = delta_n(fcfg.key_length, fcfg.eps_smooth, fcfg.eps_pa)?;
    let frac = fcfg.key_fraction();
    let raw = frac * (beta * terms.mutual_info - terms.holevo - delta);
    Ok(FiniteSizeResult {
        key_rate: raw.max(0.0),
        raw_key_rate: raw,
        delta,
        key_fraction: frac,
        worst_case: worst,
        asymptotic_terms: terms,
    })
}

/// Finite-size key rate; without `est` the estimates are derived from the configured links.
pub fn finite_size_key_rate(
    cfg: &ProtocolConfig,
    fcfg: &FiniteSizeConfig,
    est: Option<&EstimatedChannel>,
) -> Result<FiniteSizeResult> {
    cfg.validate()?;
    let est = match est {
        Some(e) => *e,
        None => EstimatedChannel::from_model(&cfg.link_params()?, cfg.modulation_variance, fcfg)?,
    };
    finite_size_key_rate_with_estimate(
        cfg.modulation_variance,
        cfg.beta,
        cfg.physicality_mode,
        fcfg,
        &est,
    )
}
