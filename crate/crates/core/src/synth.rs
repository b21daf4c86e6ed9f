//! Two-Gaussian synthetic benchmark with a rotation-biased sensitive attribute.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::{seeded_rng, Error, Result};

/// Generator constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_total: usize,
    pub seed: u64,
    /// Probability of `y = 1`.
    pub class_balance: f64,
    /// Odds multiplier favouring `z = 1` where the positive-class density dominates.
    pub bias_factor: f64,
    /// Rotation (radians) applied before the densities are compared.
    pub rotation: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_total: 3200,
            seed: 0,
            class_balance: 0.5,
            bias_factor: 7.0,
            rotation: PI / 5.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_total < 4 {
            return Err(Error::InvalidSynthSpec("n_total must be at least 4".into()));
        }
        if !(self.class_balance > 0.0 && self.class_balance < 1.0) {
            return Err(Error::InvalidSynthSpec("class_balance must lie in (0,1)".into()));
        }
        if !(self.bias_factor > 0.0 && self.bias_factor.is_finite()) {
            return Err(Error::InvalidSynthSpec("bias_factor must be positive".into()));
        }
        if !self.rotation.is_finite() {
            return Err(Error::InvalidSynthSpec("rotation must be finite".into()));
        }
        Ok(())
    }
}

/// Bivariate normal with a precomputed Cholesky factor.
#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian2 {
    mean: [f64; 2],
    cov: [[f64; 2]; 2],
    chol: [[f64; 2]; 2],
    det: f64,
}

impl Gaussian2 {
    pub fn new(mean: [f64; 2], cov: [[f64; 2]; 2]) -> Result<Self> {
        if cov[0][1] != cov[1][0] || cov[0][0] <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        let a = cov[0][0].sqrt();
        let b = cov[0][1] / a;
        let c2 = cov[1][1] - b * b;
        if c2 <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        Ok(Gaussian2 {
            mean,
            cov,
            chol: [[a, 0.0], [b, c2.sqrt()]],
            det,
        })
    }

    /// `N([1,1], [[5,1],[1,5]])`, the positive-class law.
    pub fn positive_class() -> Self {
        Gaussian2::new([1.0, 1.0], [[5.0, 1.0], [1.0, 5.0]]).expect("constant covariance")
    }

    /// `N([-1,-1], [[10,1],[1,3]])`, the negative-class law.
    pub fn negative_class() -> Self {
        Gaussian2::new([-1.0, -1.0], [[10.0, 1.0], [1.0, 3.0]]).expect("constant covariance")
    }

    pub fn mean(&self) -> [f64; 2] {
        self.mean
    }

    pub fn density(&self, x: [f64; 2]) -> f64 {
        let d0 = x[0] - self.mean[0];
        let d1 = x[1] - self.mean[1];
        // Σ⁻¹ = adj(Σ) / det
        let q = (self.cov[1][1] * d0 * d0 - 2.0 * self.cov[0][1] * d0 * d1
            + self.cov[0][0] * d1 * d1)
            / self.det;
        (-0.5 * q).exp() / (2.0 * PI * self.det.sqrt())
    }

    pub fn sample(&self, rng: &mut impl rand::Rng) -> [f64; 2] {
        let u0: f64 = rng.sample(StandardNormal);
        let u1: f64 = rng.sample(StandardNormal);
        [
            self.mean[0] + self.chol[0][0] * u0,
            self.mean[1] + self.chol[1][0] * u0 + self.chol[1][1] * u1,
        ]
    }
}

/// `Pr(z = 1 | x)` for a point `x`: the biased odds of the two class densities
/// evaluated at `x` rotated by `rotation`.
pub fn sensitive_probability(spec: &SynthSpec, pos: &Gaussian2, neg: &Gaussian2, x: [f64; 2]) -> f64 {
    let (s, c) = spec.rotation.sin_cos();
    let rotated = [x[0] * c - x[1] * s, x[0] * s + x[1] * c];
    let p1 = spec.bias_factor * pos.density(rotated);
    let p0 = neg.density(rotated);
    if p1 + p0 == 0.0 {
        0.5
    } else {
        p1 / (p1 + p0)
    }
}

/// Draws the dataset described by `spec`. Raw (unstandardized) features `x1, x2`.
pub fn generate(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let pos = Gaussian2::positive_class();
    let neg = Gaussian2::negative_class();
    let mut rng = seeded_rng(spec.seed, 0x5_7e7);
    let n = spec.n_total;
    let mut features = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    let mut sensitive = Vec::with_capacity(n);
    for _ in 0..n {
        let y = u8::from(rng.random::<f64>() < spec.class_balance);
        let x = if y == 1 { pos.sample(&mut rng) } else { neg.sample(&mut rng) };
        let pz = sensitive_probability(spec, &pos, &neg, x);
        let z = u8::from(rng.random::<f64>() < pz);
        features.extend_from_slice(&x);
        labels.push(y);
        sensitive.push(z);
    }
    Dataset::new(features, 2, labels, sensitive)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_size_and_determinism() {
        let spec = SynthSpec {
            seed: 9,
            ..SynthSpec::default()
        };
        let a = generate(&spec).unwrap();
        assert_eq!(a.len(), 3200);
        assert_eq!(a.n_features(), 2);
        assert_eq!(a, generate(&spec).unwrap());
        let b = generate(&SynthSpec { seed: 10, ..spec }).unwrap();
        assert_ne!(a.features(), b.features());
    }

    #[test]
    fn density_at_mean() {
        for g in [Gaussian2::positive_class(), Gaussian2::negative_class()] {
            let det = g.cov[0][0] * g.cov[1][1] - g.cov[0][1] * g.cov[1][0];
            let want = 1.0 / (2.0 * PI * det.sqrt());
            assert!((g.density(g.mean()) - want).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_indefinite_covariance() {
        assert!(matches!(
            Gaussian2::new([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]]),
            Err(Error::NotPositiveDefinite)
        ));
        assert!(matches!(
            Gaussian2::new([0.0, 0.0], [[-1.0, 0.0], [0.0, 1.0]]),
            Err(Error::NotPositiveDefinite)
        ));
    }

    #[test]
    fn sample_moments_match_covariance() {
        let g = Gaussian2::negative_class();
        let mut rng = seeded_rng(3, 0);
        let n = 200_000;
        let xs: Vec<[f64; 2]> = (0..n).map(|_| g.sample(&mut rng)).collect();
        let m0 = xs.iter().map(|x| x[0]).sum::<f64>() / n as f64;
        let m1 = xs.iter().map(|x| x[1]).sum::<f64>() / n as f64;
        let c00 = xs.iter().map(|x| (x[0] - m0).powi(2)).sum::<f64>() / n as f64;
        let c01 = xs.iter().map(|x| (x[0] - m0) * (x[1] - m1)).sum::<f64>() / n as f64;
        let c11 = xs.iter().map(|x| (x[1] - m1).powi(2)).sum::<f64>() / n as f64;
        assert!((m0 + 1.0).abs() < 0.03 && (m1 + 1.0).abs() < 0.03);
        assert!((c00 - 10.0).abs() < 0.15);
        assert!((c01 - 1.0).abs() < 0.05);
        assert!((c11 - 3.0).abs() < 0.05);
    }

    #[test]
    fn class_count_within_four_sigma() {
        let spec = SynthSpec {
            n_total: 10_000,
            seed: 5,
            class_balance: 0.3,
            ..SynthSpec::default()
        };
        let d = generate(&spec).unwrap();
        let pos = d.labels().iter().filter(|&&y| y == 1).count() as f64;
        let sd = (10_000.0f64 * 0.3 * 0.7).sqrt();
        assert!((pos - 3000.0).abs() <= 4.0 * sd);
    }

    #[test]
    fn huge_bias_factor_forces_z_one() {
        // Points drawn from the positive law, rotated, keep p1' far from zero.
        let spec = SynthSpec {
            bias_factor: 1e9,
            ..SynthSpec::default()
        };
        let pos = Gaussian2::positive_class();
        let neg = Gaussian2::negative_class();
        let mut rng = seeded_rng(1, 0);
        let mut z_sum = 0.0;
        let mut count = 0;
        while count < 20_000 {
            let x = pos.sample(&mut rng);
            let (s, c) = spec.rotation.sin_cos();
            let r = [x[0] * c - x[1] * s, x[0] * s + x[1] * c];
            if pos.density(r) < 1e-6 {
                continue;
            }
            let pz = sensitive_probability(&spec, &pos, &neg, x);
            z_sum += f64::from(u8::from(rng.random::<f64>() < pz));
            count += 1;
        }
        assert!(z_sum / count as f64 >= 0.999);
    }

    #[test]
    fn sensitive_attribute_is_biased_toward_positives() {
        // An independent Monte-Carlo run of the same law over 10^5 draws gives
        // Pr(z=1|y=1) ≈ 0.902, Pr(z=1|y=0) ≈ 0.775, a gap of ≈ 0.127.
        let spec = SynthSpec {
            n_total: 100_000,
            seed: 2,
            ..SynthSpec::default()
        };
        let d = generate(&spec).unwrap();
        let rate = |y: u8| {
            let (mut hit, mut tot) = (0usize, 0usize);
            for i in 0..d.len() {
                if d.label(i) == y {
                    tot += 1;
                    hit += d.sensitive()[i] as usize;
                }
            }
            hit as f64 / tot as f64
        };
        let gap = rate(1) - rate(0);
        assert!((gap - 0.127).abs() < 0.015, "{} {}", rate(1), rate(0));
        assert!((rate(1) - 0.902).abs() < 0.01);
    }

    #[test]
    fn invalid_specs() {
        for bad in [
            SynthSpec { n_total: 3, ..Default::default() },
            SynthSpec { class_balance: 1.0, ..Default::default() },
            SynthSpec { bias_factor: 0.0, ..Default::default() },
        ] {
            assert!(matches!(generate(&bad), Err(Error::InvalidSynthSpec(_))));
        }
    }
}
