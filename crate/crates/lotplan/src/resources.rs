//! Distributed energy resources: expected wind-turbine output from a
//! Weibull wind-speed distribution against a piecewise-linear power curve,
//! and CHP dispatch limits.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use thiserror::Error;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindResource {
    /// Weibull shape.
    pub k: f64,
    /// Weibull scale, m/s.
    pub lambda: f64,
    pub cut_in: f64,
    pub rated_speed: f64,
    pub cut_out: f64,
    pub p_min: f64,
    pub p_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChpUnit {
    pub p_min: f64,
    pub p_max: f64,
    /// Marginal cost, $/kWh (not in the lot-owner objective; kept for reports).
    pub marginal_cost: f64,
}

#[derive(Debug, Error)]
pub enum ResourceError {
    #[error("Weibull parameters must be positive (k = {k}, lambda = {lambda})")]
    NonPositiveParameter { k: f64, lambda: f64 },
    #[error("power curve speeds must satisfy cut_in < rated < cut_out")]
    BadCurve,
}

impl WindResource {
    pub fn validate(&self) -> Result<(), ResourceError> {
        if self.k <= 0.0 || self.lambda <= 0.0 {
            return Err(ResourceError::NonPositiveParameter {
                k: self.k,
                lambda: self.lambda,
            });
        }
        if !(self.cut_in < self.rated_speed && self.rated_speed < self.cut_out) {
            return Err(ResourceError::BadCurve);
        }
        Ok(())
    }

    /// Turbine output at wind speed `v`: zero below cut-in and above cut-out,
    /// linear ramp to `p_max` at rated speed, flat plateau to cut-out.
    pub fn power_at(&self, v: f64) -> f64 {
        if v < self.cut_in || v > self.cut_out {
            0.0
        } else if v < self.rated_speed {
            self.p_max * (v - self.cut_in) / (self.rated_speed - self.cut_in)
        } else {
            self.p_max
        }
    }
}

/// Mean of the Weibull distribution: `lambda * Gamma(1 + 1/k)`.
pub fn weibull_mean(k: f64, lambda: f64) -> Result<f64, ResourceError> {
    if k <= 0.0 || lambda <= 0.0 {
        return Err(ResourceError::NonPositiveParameter { k, lambda });
    }
    Ok(lambda * gamma(1.0 + 1.0 / k))
}

fn weibull_cdf(k: f64, lambda: f64, v: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else {
        1.0 - (-(v / lambda).powf(k)).exp()
    }
}

fn weibull_pdf(k: f64, lambda: f64, v: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    let z = v / lambda;
    (k / lambda) * z.powf(k - 1.0) * (-z.powf(k)).exp()
}

/// Expected turbine output under the Weibull wind distribution, kW.
///
/// The ramp segment is integrated with composite Simpson's rule; the rated
/// plateau contributes `p_max * (F(cut_out) - F(rated))` in closed form.
pub fn expected_wt_power(res: &WindResource) -> Result<f64, ResourceError> {
    res.validate()?;
    let (k, lambda) = (res.k, res.lambda);
    let n = 2000; // even panel count over the ramp
    let a = res.cut_in;
    let b = res.rated_speed;
    let h = (b - a) / n as f64;
    let mut ramp = 0.0;
    for i in 0..=n {
        let v = a + i as f64 * h;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        ramp += w * res.power_at(v) * weibull_pdf(k, lambda, v);
    }
    ramp *= h / 3.0;
    let plateau =
        res.p_max * (weibull_cdf(k, lambda, res.cut_out) - weibull_cdf(k, lambda, res.rated_speed));
    Ok((ramp + plateau).clamp(0.0, res.p_max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weibull_mean_special_cases() {
        // k = 1 is the exponential distribution: mean = lambda.
        assert!((weibull_mean(1.0, 7.5).unwrap() - 7.5).abs() < 1e-12);
        // k = 2, lambda = 1: mean = sqrt(pi)/2.
        let m = weibull_mean(2.0, 1.0).unwrap();
        assert!((m - 0.886_226_925_452_758).abs() < 1e-10);
        // Scale family: lambda scaled by c scales the mean by c.
        let base = weibull_mean(1.7, 1.0).unwrap();
        assert!((weibull_mean(1.7, 3.0).unwrap() - 3.0 * base).abs() < 1e-12);
        assert!(weibull_mean(0.0, 1.0).is_err());
        assert!(weibull_mean(2.0, -1.0).is_err());
    }

    fn resource(k: f64, lambda: f64, cut_in: f64, rated: f64, cut_out: f64) -> WindResource {
        WindResource {
            k,
            lambda,
            cut_in,
            rated_speed: rated,
            cut_out,
            p_min: 100.0,
            p_max: 300.0,
        }
    }

    #[test]
    fn degenerate_density_positions() {
        // Density mass essentially above cut-out -> ~0 output.
        let high = resource(8.0, 120.0, 3.0, 12.0, 25.0);
        assert!(expected_wt_power(&high).unwrap() < 1.0);
        // Density concentrated inside the rated plateau -> ~p_max.
        let plateau = resource(20.0, 18.0, 3.0, 12.0, 25.0);
        assert!(expected_wt_power(&plateau).unwrap() > 0.99 * 300.0);
    }

    #[test]
    fn monotone_in_scale_below_plateau() {
        let lo = expected_wt_power(&resource(2.0, 5.0, 3.0, 12.0, 25.0)).unwrap();
        let hi = expected_wt_power(&resource(2.0, 8.0, 3.0, 12.0, 25.0)).unwrap();
        assert!(hi > lo);
        assert!(lo >= 0.0 && hi <= 300.0);
    }
}
