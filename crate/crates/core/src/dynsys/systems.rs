use alloc::collections::BTreeMap;
use alloc::string::String;

use num_traits::Float;
use serde::{Deserialize, Serialize};

/// An autonomous or time-dependent first-order system `ẋ = f(t, x)`.
pub trait OdeModel {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn parameters(&self) -> BTreeMap<String, f64>;
    /// Writes `f(t, x)` into `dx`.
    fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]);
}

pub fn lorenz_rhs(state: [f64; 3], sigma: f64, rho: f64, beta: f64) -> [f64; 3] {
    let [x, y, z] = state;
    [sigma * (y - x), x * (rho - z) - y, x * y - beta * z]
}

pub fn lotka_volterra_rhs(state: [f64; 2], alpha: f64, beta: f64, gamma: f64, delta: f64) -> [f64; 2] {
    let [x, y] = state;
    [alpha * x - beta * x * y, -gamma * y + delta * x * y]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lorenz {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for Lorenz {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
        }
    }
}

impl OdeModel for Lorenz {
    fn name(&self) -> &str {
        "lorenz"
    }

    fn dimension(&self) -> usize {
        3
    }

    fn parameters(&self) -> BTreeMap<String, f64> {
        [("beta", self.beta), ("rho", self.rho), ("sigma", self.sigma)]
            .into_iter()
            .map(|(k, v)| (String::from(k), v))
            .collect()
    }

    fn rhs(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
        let d = lorenz_rhs([x[0], x[1], x[2]], self.sigma, self.rho, self.beta);
        dx.copy_from_slice(&d);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LotkaVolterra {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl LotkaVolterra {
    /// `δx − γ ln x + βy − α ln y`, constant along trajectories.
    pub fn first_integral(&self, x: f64, y: f64) -> f64 {
        self.delta * x - self.gamma * x.ln() + self.beta * y - self.alpha * y.ln()
    }
}

impl OdeModel for LotkaVolterra {
    fn name(&self) -> &str {
        "lotka_volterra"
    }

    fn dimension(&self) -> usize {
        2
    }

    fn parameters(&self) -> BTreeMap<String, f64> {
        [("alpha", self.alpha), ("beta", self.beta), ("delta", self.delta), ("gamma", self.gamma)]
            .into_iter()
            .map(|(k, v)| (String::from(k), v))
            .collect()
    }

    fn rhs(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
        let d = lotka_volterra_rhs([x[0], x[1]], self.alpha, self.beta, self.gamma, self.delta);
        dx.copy_from_slice(&d);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lorenz_examples() {
        assert_eq!(lorenz_rhs([0.0; 3], 10.0, 28.0, 8.0 / 3.0), [0.0; 3]);
        let d = lorenz_rhs([1.0; 3], 10.0, 28.0, 8.0 / 3.0);
        assert_eq!(d[0], 0.0);
        assert_eq!(d[1], 26.0);
        assert!((d[2] - (1.0 - 8.0 / 3.0)).abs() < 1e-15);
        let b: f64 = 8.0 / 3.0;
        let c = (b * 27.0).sqrt();
        let d = lorenz_rhs([c, c, 27.0], 10.0, 28.0, b);
        assert!(d.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn lotka_volterra_examples() {
        assert_eq!(lotka_volterra_rhs([0.0, 0.0], 1.0, 1.0, 1.0, 1.0), [0.0, 0.0]);
        let (a, b, g, d) = (0.7, 1.1, 0.4, 0.9);
        let e = lotka_volterra_rhs([g / d, a / b], a, b, g, d);
        assert!(e.iter().all(|v| v.abs() < 1e-15));
        assert_eq!(lotka_volterra_rhs([2.0, 1.0], 1.0, 1.0, 1.0, 1.0), [0.0, 1.0]);
    }
}
