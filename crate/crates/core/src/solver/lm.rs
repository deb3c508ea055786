//! Trust-region control for Levenberg-Marquardt.

/// Radius state: `mu` is the trust-region radius, `nu` the rejection growth factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrustRegion {
    pub mu: f64,
    pub nu: f64,
    pub min_mu: f64,
    pub max_mu: f64,
    /// Minimum ratio of actual to predicted decrease for acceptance (η).
    pub eta: f64,
}

impl TrustRegion {
    pub fn new(mu: f64, min_mu: f64, max_mu: f64, eta: f64) -> Self {
        TrustRegion { mu, nu: 2.0, min_mu, max_mu, eta }
    }

    /// Damping weight λ = 1/μ.
    pub fn lambda(&self) -> f64 {
        1.0 / self.mu
    }

    /// Updates the radius from the step quality and returns whether to accept.
    /// A non-positive (or non-finite) predicted decrease is a rejection.
    pub fn step(&mut self, cost_old: f64, cost_new: f64, predicted: f64) -> bool {
        let rho = (cost_old - cost_new) / predicted;
        if predicted > 0.0 && cost_new.is_finite() && rho > self.eta {
            let t = 2.0 * rho - 1.0;
            self.mu = (self.mu / (1.0f64 / 3.0).max(1.0 - t * t * t)).clamp(self.min_mu, self.max_mu);
            self.nu = 2.0;
            true
        } else {
            self.mu = (self.mu / self.nu).max(self.min_mu);
            self.nu *= 2.0;
            false
        }
    }
}
