//! Physical links, the displacement gain, and reduction to an equivalent one-way channel.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Fiber loss used throughout the reference scenarios, dB/km.
pub const DEFAULT_ATTENUATION_DB_PER_KM: f64 = 0.2;

/// Absolute slack on the physicality comparison so exact boundary points
/// (e.g. the identity channel, where both sides are zero) are not lost to rounding.
const PHYSICALITY_TOL: f64 = 1e-12;

/// Transmittance and excess noise (SNU) of both links, per quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub eta_a_x: f64,
    pub eps_a_x: f64,
    pub eta_b_x: f64,
    pub eps_b_x: f64,
    pub eta_a_p: f64,
    pub eps_a_p: f64,
    pub eta_b_p: f64,
    pub eps_b_p: f64,
}

impl LinkParams {
    /// Links whose p-quadrature parameters mirror the x-quadrature ones.
    pub fn symmetric(eta_a: f64, eps_a: f64, eta_b: f64, eps_b: f64) -> Result<Self> {
        let links = Self {
            eta_a_x: eta_a,
            eps_a_x: eps_a,
            eta_b_x: eta_b,
            eps_b_x: eps_b,
            eta_a_p: eta_a,
            eps_a_p: eps_a,
            eta_b_p: eta_b,
            eps_b_p: eps_b,
        };
        links.validate()?;
        Ok(links)
    }

    pub fn validate(&self) -> Result<()> {
        let etas = [
            ("eta_a_x", self.eta_a_x),
            ("eta_b_x", self.eta_b_x),
            ("eta_a_p", self.eta_a_p),
            ("eta_b_p", self.eta_b_p),
        ];
        for (name, eta) in etas {
            if !(eta > 0.0 && eta <= 1.0) {
                return domain(format!("{name} must lie in (0, 1], got {eta}"));
            }
        }
        let epss = [
            ("eps_a_x", self.eps_a_x),
            ("eps_b_x", self.eps_b_x),
            ("eps_a_p", self.eps_a_p),
            ("eps_b_p", self.eps_b_p),
        ];
        for (name, eps) in epss {
            if !(eps >= 0.0) || !eps.is_finite() {
                return domain(format!("{name} must be finite and >= 0, got {eps}"));
            }
        }
        Ok(())
    }
}

/// Reduced one-way channel seen by the sender's retained mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquivalentChannel {
    pub t_x: f64,
    pub eps_prime_x: f64,
    pub t_p: f64,
    pub eps_prime_p: f64,
    /// Squared displacement gain applied on the receiver side.
    pub gain_sq: f64,
}

/// Placement of the relay between the two senders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    /// Sender A to relay, km.
    pub l_ac: f64,
    /// Sender B to relay, km.
    pub l_bc: f64,
    /// Fiber attenuation, dB/km.
    pub alpha: f64,
    /// Extra multiplicative efficiency on B's link.
    pub bob_side_efficiency: f64,
}

impl Topology {
    /// Relay in the middle: `L_AC = L_BC = total / 2`.
    pub fn symmetric(total_km: f64, alpha: f64) -> Self {
        Self {
            l_ac: 0.5 * total_km,
            l_bc: 0.5 * total_km,
            alpha,
            bob_side_efficiency: 1.0,
        }
    }

    /// Relay co-located with B, whose short link has efficiency `bob_side_efficiency`.
    pub fn asymmetric(l_ac: f64, alpha: f64, bob_side_efficiency: f64) -> Self {
        Self {
            l_ac,
            l_bc: 0.0,
            alpha,
            bob_side_efficiency,
        }
    }

    pub fn total_length(&self) -> f64 {
        self.l_ac + self.l_bc
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l_ac >= 0.0) || !(self.l_bc >= 0.0) {
            return domain(format!(
                "fiber lengths must be >= 0, got L_AC={} L_BC={}",
                self.l_ac, self.l_bc
            ));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return domain(format!("attenuation must be > 0 dB/km, got {}", self.alpha));
        }
        if !(self.bob_side_efficiency > 0.0 && self.bob_side_efficiency <= 1.0) {
            return domain(format!(
                "bob_side_efficiency must lie in (0, 1], got {}",
                self.bob_side_efficiency
            ));
        }
        Ok(())
    }

    /// Per-link transmittances `(eta_A, eta_B)`.
    pub fn transmittances(&self) -> Result<(f64, f64)> {
        self.validate()?;
        let eta_a = fiber_transmittance(self.l_ac, self.alpha)?;
        let eta_b = fiber_transmittance(self.l_bc, self.alpha)? * self.bob_side_efficiency;
        Ok((eta_a, eta_b))
    }

    /// Link parameters with distance-independent excess noise and mirrored p quadratures.
    pub fn links(&self, eps_a: f64, eps_b: f64) -> Result<LinkParams> {
        let (eta_a, eta_b) = self.transmittances()?;
        LinkParams::symmetric(eta_a, eps_a, eta_b, eps_b)
    }
}

/// `10^(-alpha L / 10)`.
pub fn fiber_transmittance(length_km: f64, alpha_db_per_km: f64) -> Result<f64> {
    if !(length_km >= 0.0) {
        return domain(format!("fiber length must be >= 0, got {length_km}"));
    }
    if !(alpha_db_per_km > 0.0) {
        return domain(format!("attenuation must be > 0, got {alpha_db_per_km}"));
    }
    Ok(10f64.powf(-alpha_db_per_km * length_km / 10.0))
}

/// Displacement gain that minimizes the equivalent excess noise, `2 V_m / (eta_B (V_m + 2))`.
pub fn optimal_gain_sq(modulation_variance: f64, eta_b_x: f64) -> Result<f64> {
    if !(modulation_variance > 0.0) || !modulation_variance.is_finite() {
        return domain(format!("modulation variance must be > 0, got {modulation_variance}"));
    }
    if !(eta_b_x > 0.0 && eta_b_x <= 1.0) {
        return domain(format!("eta_B must lie in (0, 1], got {eta_b_x}"));
    }
    Ok(2.0 * modulation_variance / (eta_b_x * (modulation_variance + 2.0)))
}

/// How the receiver's displacement gain is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum GainChoice {
    #[default]
    Optimal,
    Fixed(f64),
}

/// Equivalent excess noise for an arbitrary gain `g^2`.
pub fn excess_noise_for_gain(
    eta_a: f64,
    eps_a: f64,
    eta_b: f64,
    eps_b: f64,
    modulation_variance: f64,
    gain_sq: f64,
) -> f64 {
    let chi_a = (1.0 - eta_a) / eta_a + eps_a;
    let chi_b = (1.0 - eta_b) / eta_b + eps_b;
    let residual = (2.0 * modulation_variance).sqrt() / gain_sq.sqrt()
        - (eta_b * (modulation_variance + 2.0)).sqrt();
    1.0 + eta_b / eta_a * (chi_b - 1.0) + chi_a + residual * residual / eta_a
}

/// Equivalent excess noise at the optimal gain.
pub fn excess_noise_at_optimal_gain(eta_a: f64, eps_a: f64, eta_b: f64, eps_b: f64) -> f64 {
    eps_a + 2.0 / eta_a + eta_b / eta_a * (eps_b - 2.0)
}

/// Reduces the two links plus displacement to one channel per quadrature.
///
/// The gain is fixed by the x quadrature and shared by p.
pub fn equivalent_channel(
    links: &LinkParams,
    modulation_variance: f64,
    gain: GainChoice,
) -> Result<EquivalentChannel> {
    links.validate()?;
    let optimal = optimal_gain_sq(modulation_variance, links.eta_b_x)?;
    let gain_sq = match gain {
        GainChoice::Optimal => optimal,
        GainChoice::Fixed(g2) if g2 > 0.0 && g2.is_finite() => g2,
        GainChoice::Fixed(g2) => return domain(format!("gain g^2 must be > 0, got {g2}")),
    };
    let (eps_prime_x, eps_prime_p) = match gain {
        GainChoice::Optimal => (
            excess_noise_at_optimal_gain(links.eta_a_x, links.eps_a_x, links.eta_b_x, links.eps_b_x),
            // The p quadrature shares the x gain, which only cancels the
            // displacement residual when eta_B,p equals eta_B,x.
            if links.eta_b_p == links.eta_b_x {
                excess_noise_at_optimal_gain(links.eta_a_p, links.eps_a_p, links.eta_b_p, links.eps_b_p)
            } else {
                excess_noise_for_gain(
                    links.eta_a_p,
                    links.eps_a_p,
                    links.eta_b_p,
                    links.eps_b_p,
                    modulation_variance,
                    gain_sq,
                )
            },
        ),
        GainChoice::Fixed(_) => (
            excess_noise_for_gain(
                links.eta_a_x,
                links.eps_a_x,
                links.eta_b_x,
                links.eps_b_x,
                modulation_variance,
                gain_sq,
            ),
            excess_noise_for_gain(
                links.eta_a_p,
                links.eps_a_p,
                links.eta_b_p,
                links.eps_b_p,
                modulation_variance,
                gain_sq,
            ),
        ),
    };
    Ok(EquivalentChannel {
        t_x: 0.5 * links.eta_a_x * gain_sq,
        eps_prime_x,
        t_p: 0.5 * links.eta_a_p * gain_sq,
        eps_prime_p,
        gain_sq,
    })
}

/// Which correction term enters the right-hand side of the physicality parabola.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhysicalityMode {
    /// `1 / (1 + eta_x eps_x)`; finite at zero noise.
    #[default]
    Corrected,
    /// The literal `1 / (eta_x eps_x)` form, singular at zero noise.
    StrictLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Physicality {
    Physical,
    Nonphysical,
}

/// Both sides of the constraint together with the verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhysicalityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub verdict: Physicality,
}

/// Uncertainty-principle constraint tying the unmodulated p quadrature to the x quadrature.
pub fn physicality_check(
    eta_x: f64,
    eps_x: f64,
    eta_p: f64,
    eps_p: f64,
    mode: PhysicalityMode,
) -> Result<PhysicalityReport> {
    for (name, eta) in [("eta_x", eta_x), ("eta_p", eta_p)] {
        if !(eta > 0.0 && eta <= 1.0) {
            return domain(format!("{name} must lie in (0, 1], got {eta}"));
        }
    }
    for (name, eps) in [("eps_x", eps_x), ("eps_p", eps_p)] {
        if !(eps >= 0.0) || !eps.is_finite() {
            return domain(format!("{name} must be finite and >= 0, got {eps}"));
        }
    }
    let noise = 1.0 + eta_x * eps_x;
    let correction = match mode {
        PhysicalityMode::Corrected => 1.0 / noise,
        PhysicalityMode::StrictLiteral => {
            if eta_x * eps_x == 0.0 {
                return Err(Error::Singular(
                    "literal physicality form divides by eta_x * eps_x = 0".into(),
                ));
            }
            1.0 / (eta_x * eps_x)
        }
    };
    let gap = (eta_x / (noise * noise)).sqrt() - eta_p.sqrt();
    let lhs = gap * gap;
    let rhs = (1.0 - eta_x / noise) * (1.0 + eta_p * eps_p - correction);
    let verdict = if lhs <= rhs + PHYSICALITY_TOL {
        Physicality::Physical
    } else {
        Physicality::Nonphysical
    };
    Ok(PhysicalityReport { lhs, rhs, verdict })
}

/// Checks both links' p-quadrature parameters, failing on the first nonphysical one.
pub fn ensure_physical(links: &LinkParams, mode: PhysicalityMode) -> Result<()> {
    let pairs = [
        ("A", links.eta_a_x, links.eps_a_x, links.eta_a_p, links.eps_a_p),
        ("B", links.eta_b_x, links.eps_b_x, links.eta_b_p, links.eps_b_p),
    ];
    for (name, eta_x, eps_x, eta_p, eps_p) in pairs {
        let report = physicality_check(eta_x, eps_x, eta_p, eps_p, mode)?;
        if report.verdict == Physicality::Nonphysical {
            return Err(Error::Nonphysical(format!(
                "link {name}: eta_p={eta_p}, eps_p={eps_p} (lhs {:.6e} > rhs {:.6e})",
                report.lhs, report.rhs
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fiber_values() {
        assert_eq!(fiber_transmittance(0.0, 0.2).unwrap(), 1.0);
        assert_relative_eq!(fiber_transmittance(50.0, 0.2).unwrap(), 0.1, epsilon = 1e-15);
        assert_relative_eq!(
            fiber_transmittance(22.0, 0.2).unwrap(),
            0.363_078_054_770_101_3,
            epsilon = 1e-14
        );
        assert!(fiber_transmittance(-1.0, 0.2).is_err());
        assert!(fiber_transmittance(1.0, 0.0).is_err());
    }

    #[test]
    fn fiber_is_multiplicative() {
        for (a, b) in [(0.5, 3.0), (12.0, 7.25), (40.0, 0.0)] {
            let joint = fiber_transmittance(a + b, 0.2).unwrap();
            let split = fiber_transmittance(a, 0.2).unwrap() * fiber_transmittance(b, 0.2).unwrap();
            assert!((joint - split).abs() < 1e-12);
        }
    }

    #[test]
    fn optimal_gain_values() {
        assert_relative_eq!(optimal_gain_sq(100.0, 1.0).unwrap(), 200.0 / 102.0, epsilon = 1e-15);
        assert_relative_eq!(optimal_gain_sq(1e12, 1.0).unwrap(), 2.0, epsilon = 1e-11);
        assert_eq!(optimal_gain_sq(2.0, 0.5).unwrap(), 2.0);
        assert!(optimal_gain_sq(2.0, 0.0).is_err());
        assert!(optimal_gain_sq(0.0, 0.5).is_err());
    }

    #[test]
    fn reduction_examples() {
        let links = LinkParams::symmetric(1.0, 0.002, 1.0, 0.002).unwrap();
        let ch = equivalent_channel(&links, 100.0, GainChoice::Optimal).unwrap();
        assert_relative_eq!(ch.eps_prime_x, 0.004, epsilon = 1e-15);
        assert_relative_eq!(ch.t_x, 100.0 / 102.0, epsilon = 1e-15);

        let clean = LinkParams::symmetric(1.0, 0.0, 1.0, 0.0).unwrap();
        for vm in [0.5, 10.0, 300.0] {
            let ch = equivalent_channel(&clean, vm, GainChoice::Optimal).unwrap();
            assert_eq!(ch.eps_prime_x, 0.0);
            assert_eq!(ch.eps_prime_p, 0.0);
        }
    }

    #[test]
    fn fixed_gain_at_optimum_matches_closed_form() {
        let links = LinkParams::symmetric(0.63, 0.01, 0.41, 0.003).unwrap();
        let g2 = optimal_gain_sq(37.0, links.eta_b_x).unwrap();
        let a = equivalent_channel(&links, 37.0, GainChoice::Optimal).unwrap();
        let b = equivalent_channel(&links, 37.0, GainChoice::Fixed(g2)).unwrap();
        assert!((a.eps_prime_x - b.eps_prime_x).abs() < 1e-12);
        assert!((a.eps_prime_p - b.eps_prime_p).abs() < 1e-12);
        assert!(equivalent_channel(&links, 37.0, GainChoice::Fixed(-1.0)).is_err());
    }

    #[test]
    fn invalid_links_rejected() {
        assert!(LinkParams::symmetric(0.0, 0.0, 1.0, 0.0).is_err());
        assert!(LinkParams::symmetric(1.0, -0.1, 1.0, 0.0).is_err());
        assert!(LinkParams::symmetric(1.2, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn physicality_operating_point() {
        let r = physicality_check(0.5, 0.002, 0.5, 0.002, PhysicalityMode::Corrected).unwrap();
        assert_eq!(r.verdict, Physicality::Physical);
        let id = physicality_check(1.0, 0.0, 1.0, 0.0, PhysicalityMode::Corrected).unwrap();
        assert_eq!((id.lhs, id.rhs), (0.0, 0.0));
        assert_eq!(id.verdict, Physicality::Physical);
    }

    #[test]
    fn strict_literal_form() {
        let r = physicality_check(0.5, 0.002, 0.5, 0.002, PhysicalityMode::StrictLiteral).unwrap();
        assert_eq!(r.verdict, Physicality::Nonphysical);
        assert!(matches!(
            physicality_check(0.5, 0.0, 0.5, 0.0, PhysicalityMode::StrictLiteral),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn strongly_asymmetric_p_channel_is_nonphysical() {
        // Much better p transmission than x with no p noise cannot be physical.
        let r = physicality_check(0.1, 0.01, 1.0, 0.0, PhysicalityMode::Corrected).unwrap();
        assert_eq!(r.verdict, Physicality::Nonphysical);
    }

    #[test]
    fn physical_region_lies_above_one_boundary() {
        // For each eta_p column the verdict flips at most once, from
        // nonphysical to physical, as eps_p grows.
        for (eta_x, eps_x) in [(0.1, 0.01), (0.3, 0.05), (0.5, 0.1), (0.8, 0.02)] {
            for i in 1..=50 {
                let eta_p = i as f64 / 50.0;
                let verdicts: Vec<Physicality> = (0..=200)
                    .map(|j| {
                        let eps_p = j as f64 * 0.05;
                        physicality_check(eta_x, eps_x, eta_p, eps_p, PhysicalityMode::Corrected)
                            .unwrap()
                            .verdict
                    })
                    .collect();
                let flips = verdicts.windows(2).filter(|w| w[0] != w[1]).count();
                assert!(flips <= 1, "eta_x={eta_x} eps_x={eps_x} eta_p={eta_p}");
                if flips == 1 {
                    assert_eq!(verdicts[0], Physicality::Nonphysical);
                }
            }
        }
    }

    #[test]
    fn asymmetric_topology_applies_bob_efficiency() {
        let topo = Topology::asymmetric(10.0, 0.2, 0.98);
        let (eta_a, eta_b) = topo.transmittances().unwrap();
        assert_relative_eq!(eta_a, 10f64.powf(-0.2), epsilon = 1e-15);
        assert_eq!(eta_b, 0.98);
        let sym = Topology::symmetric(4.0, 0.2);
        assert_eq!((sym.l_ac, sym.l_bc), (2.0, 2.0));
    }
}
