//! Analytic kernels `G(s, x)`, kernel vectors and the forward map.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::points::distance;
use crate::{Error, Points, Result, C64};

/// Scalar field of the observations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Real,
    Complex,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Kernel {
    /// `‖s − x‖^(−α)`.
    PowerLaw { exponent: f64 },
    /// `exp(−‖s − x‖)`.
    Exponential,
    /// `exp(π i s·x)`.
    Fourier,
    /// `ln ‖s − x‖`. Only usable for diagnostics: the Laplace Green's function
    /// admits no accurate eigenmatrix.
    LogPotential,
}

impl Kernel {
    pub fn power_law(exponent: f64) -> Result<Self> {
        let k = Kernel::PowerLaw { exponent };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if let Kernel::PowerLaw { exponent } = self {
            if !(exponent.is_finite() && *exponent > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "power-law exponent must be finite and positive, got {exponent}"
                )));
            }
        }
        Ok(())
    }

    pub fn field(&self) -> Field {
        match self {
            Kernel::Fourier => Field::Complex,
            _ => Field::Real,
        }
    }

    /// Deconvolution kernels need every sample strictly outside the parameter box.
    pub fn is_deconvolution(&self) -> bool {
        !matches!(self, Kernel::Fourier)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Kernel::PowerLaw { .. } => "power_law",
            Kernel::Exponential => "exponential",
            Kernel::Fourier => "fourier",
            Kernel::LogPotential => "log_potential",
        }
    }

    pub fn evaluate(&self, s: &[f64], x: &[f64]) -> Result<C64> {
        if s.len() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: s.len(),
                got: x.len(),
            });
        }
        Ok(match *self {
            Kernel::PowerLaw { exponent } => {
                let r = distance(s, x);
                if r == 0.0 {
                    return Err(Error::SingularEvaluation);
                }
                C64::new(inv_power(r, exponent), 0.0)
            }
            Kernel::Exponential => C64::new((-distance(s, x)).exp(), 0.0),
            Kernel::Fourier => {
                let phase = PI * dot(s, x);
                let (sin, cos) = phase.sin_cos();
                C64::new(cos, sin)
            }
            Kernel::LogPotential => {
                let r = distance(s, x);
                if r == 0.0 {
                    return Err(Error::SingularEvaluation);
                }
                C64::new(r.ln(), 0.0)
            }
        })
    }

    /// Evaluation at a complex parameter point, for proxy nodes on circle
    /// grids. Only the Fourier kernel is entire in `x`.
    pub fn evaluate_complex(&self, s: &[f64], z: &[C64]) -> Result<C64> {
        if s.len() != z.len() {
            return Err(Error::DimensionMismatch {
                expected: s.len(),
                got: z.len(),
            });
        }
        match self {
            Kernel::Fourier => {
                let dot: C64 = s.iter().zip(z).map(|(a, b)| b * *a).sum();
                Ok((C64::i() * PI * dot).exp())
            }
            k => Err(Error::UnsupportedKernel(format!(
                "{} kernel cannot be evaluated at complex parameter points",
                k.name()
            ))),
        }
    }

    /// Value and gradient with respect to `x`, written into `grad`.
    pub fn value_and_gradient(&self, s: &[f64], x: &[f64], grad: &mut [C64]) -> Result<C64> {
        let g = self.evaluate(s, x)?;
        match *self {
            Kernel::PowerLaw { exponent } => {
                // d/dx r^-α = α r^(-α-2) (s - x)
                let r = distance(s, x);
                let f = exponent * g.re / (r * r);
                for ((o, si), xi) in grad.iter_mut().zip(s).zip(x) {
                    *o = C64::new(f * (si - xi), 0.0);
                }
            }
            Kernel::Exponential => {
                let r = distance(s, x);
                if r == 0.0 {
                    return Err(Error::SingularEvaluation);
                }
                let f = g.re / r;
                for ((o, si), xi) in grad.iter_mut().zip(s).zip(x) {
                    *o = C64::new(f * (si - xi), 0.0);
                }
            }
            Kernel::Fourier => {
                for (o, si) in grad.iter_mut().zip(s) {
                    *o = C64::i() * (PI * si) * g;
                }
            }
            Kernel::LogPotential => {
                let r2 = distance(s, x).powi(2);
                for ((o, si), xi) in grad.iter_mut().zip(s).zip(x) {
                    *o = C64::new((xi - si) / r2, 0.0);
                }
            }
        }
        Ok(g)
    }
}

fn inv_power(r: f64, exponent: f64) -> f64 {
    if exponent == 1.0 {
        1.0 / r
    } else if exponent == 0.5 {
        1.0 / r.sqrt()
    } else if exponent == 2.0 {
        1.0 / (r * r)
    } else {
        r.powf(-exponent)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Axis-aligned cube `[lo, hi]^d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub lo: f64,
    pub hi: f64,
}

impl Cube {
    pub const UNIT: Cube = Cube { lo: -1.0, hi: 1.0 };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidArgument(format!("invalid box [{lo}, {hi}]")));
        }
        Ok(Cube { lo, hi })
    }

    /// Closed containment.
    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter().all(|&c| c >= self.lo && c <= self.hi)
    }

    pub fn strictly_inside(&self, other: &Cube) -> bool {
        self.lo > other.lo && self.hi < other.hi
    }
}

/// Unstructured sample locations `s_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub points: Points,
    pub region: Option<Cube>,
    pub exclusion: Option<Cube>,
}

impl SampleSet {
    pub fn new(points: Points) -> Result<Self> {
        let s = SampleSet {
            points,
            region: None,
            exclusion: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InvalidArgument("sample set is empty".into()));
        }
        if !self.points.all_finite() {
            return Err(Error::InvalidArgument("sample coordinates must be finite".into()));
        }
        Ok(())
    }

    /// Checks the sample/kernel compatibility: deconvolution kernels require
    /// every sample to keep a positive distance from `[−1, 1]^d`.
    pub fn validate_for(&self, kernel: &Kernel) -> Result<()> {
        self.validate()?;
        if kernel.is_deconvolution() {
            if let Some(j) = self.points.iter().position(|p| Cube::UNIT.contains(p)) {
                return Err(Error::InvalidArgument(format!(
                    "sample {j} lies inside the parameter domain [-1,1]^d; {} kernel requires samples outside it",
                    kernel.name()
                )));
            }
        }
        Ok(())
    }
}

/// `f(x) = Σ_k w_k δ(x − x_k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikeSignal {
    pub spikes: Points,
    pub weights: Vec<C64>,
}

impl SpikeSignal {
    pub fn new(spikes: Points, weights: Vec<C64>) -> Result<Self> {
        let s = SpikeSignal { spikes, weights };
        s.validate()?;
        Ok(s)
    }

    pub fn with_unit_weights(spikes: Points) -> Result<Self> {
        let n = spikes.len();
        Self::new(spikes, vec![C64::new(1.0, 0.0); n])
    }

    pub fn len(&self) -> usize {
        self.spikes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spikes.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.spikes.is_empty() {
            return Err(Error::InvalidArgument("signal needs at least one spike".into()));
        }
        if self.weights.len() != self.spikes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.spikes.len(),
                got: self.weights.len(),
            });
        }
        if let Some(k) = self.spikes.iter().position(|p| !Cube::UNIT.contains(p)) {
            return Err(Error::InvalidArgument(format!("spike {k} lies outside [-1,1]^d")));
        }
        if let Some(k) = self
            .weights
            .iter()
            .position(|w| *w == C64::new(0.0, 0.0) || !w.is_finite())
        {
            return Err(Error::InvalidArgument(format!("weight {k} must be finite and nonzero")));
        }
        Ok(())
    }

    pub fn concat(&self, other: &SpikeSignal) -> Result<SpikeSignal> {
        let mut weights = self.weights.clone();
        weights.extend_from_slice(&other.weights);
        SpikeSignal::new(self.spikes.concat(&other.spikes)?, weights)
    }
}

/// Observation values aligned with a [`SampleSet`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observations {
    pub values: Vec<C64>,
    pub sigma: f64,
    pub field: Field,
}

impl Observations {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `[G(s_j, x)]_j`, optionally scaled to unit Euclidean norm.
pub fn kernel_vector(kernel: &Kernel, samples: &SampleSet, x: &[f64], normalize: bool) -> Result<Vec<C64>> {
    let mut g = samples
        .points
        .iter()
        .map(|s| kernel.evaluate(s, x))
        .collect::<Result<Vec<_>>>()?;
    if normalize {
        normalize_in_place(&mut g)?;
    }
    Ok(g)
}

pub(crate) fn normalize_in_place(g: &mut [C64]) -> Result<()> {
    let norm = g.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroVector);
    }
    let inv = 1.0 / norm;
    g.iter_mut().for_each(|v| *v *= inv);
    Ok(())
}

/// `u_j = Σ_k G(s_j, x_k) w_k`, summed in spike order.
pub fn forward_map(kernel: &Kernel, samples: &SampleSet, signal: &SpikeSignal) -> Result<Observations> {
    kernel.validate()?;
    if samples.dim() != signal.spikes.dim() {
        return Err(Error::DimensionMismatch {
            expected: samples.dim(),
            got: signal.spikes.dim(),
        });
    }
    let mut values = Vec::with_capacity(samples.len());
    for s in samples.points.iter() {
        let mut acc = C64::new(0.0, 0.0);
        for (x, w) in signal.spikes.iter().zip(&signal.weights) {
            acc += kernel.evaluate(s, x)? * w;
        }
        values.push(acc);
    }
    Ok(Observations {
        values,
        sigma: 0.0,
        field: kernel.field(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn evaluate_examples() {
        let f = Kernel::Fourier;
        assert_eq!(f.evaluate(&[0.0, 0.0], &[0.3, -0.9]).unwrap(), c(1.0));
        let p1 = Kernel::power_law(1.0).unwrap();
        assert_eq!(p1.evaluate(&[2.0, 0.0], &[0.0, 0.0]).unwrap(), c(0.5));
        let ph = Kernel::power_law(0.5).unwrap();
        assert_eq!(ph.evaluate(&[0.0, 4.0], &[0.0, 0.0]).unwrap(), c(0.5));
        assert!(matches!(p1.evaluate(&[1.0], &[1.0]), Err(Error::SingularEvaluation)));
        assert!(matches!(
            Kernel::LogPotential.evaluate(&[1.0], &[1.0]),
            Err(Error::SingularEvaluation)
        ));
        assert!(Kernel::power_law(0.0).is_err());
        assert!(Kernel::power_law(f64::INFINITY).is_err());
        assert_eq!(Kernel::Exponential.evaluate(&[1.0], &[1.0]).unwrap(), c(1.0));
    }

    #[test]
    fn kernel_vector_examples() {
        let samples =
            SampleSet::new(Points::from_rows(2, &[[-8.0, 1.0], [3.0, 2.5], [7.0, -7.0], [0.1, 0.2]]).unwrap()).unwrap();
        let g = kernel_vector(&Kernel::Fourier, &samples, &[0.4, -0.2], true).unwrap();
        for v in &g {
            assert!((v.norm() - 0.5).abs() < 1e-15);
        }

        let one = SampleSet::new(Points::from_rows(1, &[[3.0]]).unwrap()).unwrap();
        let g = kernel_vector(&Kernel::power_law(1.0).unwrap(), &one, &[0.5], true).unwrap();
        assert!((g[0].norm() - 1.0).abs() < 1e-15);

        let three = SampleSet::new(Points::from_rows(1, &[[1.5], [2.5], [4.5]]).unwrap()).unwrap();
        let g = kernel_vector(&Kernel::power_law(1.0).unwrap(), &three, &[0.5], false).unwrap();
        assert_eq!(g, vec![c(1.0), c(0.5), c(0.25)]);

        let normed = kernel_vector(&Kernel::power_law(1.0).unwrap(), &three, &[0.5], true).unwrap();
        let n: f64 = normed.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_vector_cannot_be_normalized() {
        let mut v = vec![C64::new(0.0, 0.0); 3];
        assert!(matches!(normalize_in_place(&mut v), Err(Error::ZeroVector)));
        // ln 1 = 0 at unit distance
        let s = SampleSet::new(Points::from_rows(1, &[[2.0]]).unwrap()).unwrap();
        assert!(matches!(
            kernel_vector(&Kernel::LogPotential, &s, &[1.0], true),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn forward_map_examples() {
        let k = Kernel::power_law(1.0).unwrap();
        let samples = SampleSet::new(Points::from_rows(2, &[[2.0, 0.0], [0.0, -3.0], [1.5, 1.5]]).unwrap()).unwrap();
        let one = SpikeSignal::with_unit_weights(Points::from_rows(2, &[[0.2, 0.1]]).unwrap()).unwrap();
        let u = forward_map(&k, &samples, &one).unwrap();
        for (s, v) in samples.points.iter().zip(&u.values) {
            assert_eq!(*v, k.evaluate(s, &[0.2, 0.1]).unwrap());
        }
        assert_eq!(u.sigma, 0.0);
        assert_eq!(u.field, Field::Real);

        let cancel = SpikeSignal::new(
            Points::from_rows(2, &[[0.2, 0.1], [0.2, 0.1]]).unwrap(),
            vec![c(1.7), c(-1.7)],
        )
        .unwrap();
        let u = forward_map(&k, &samples, &cancel).unwrap();
        assert!(u.values.iter().all(|v| *v == c(0.0)));
    }

    #[test]
    fn forward_map_matches_double_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<[f64; 2]> = (0..50)
            .map(|_| [rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0)])
            .collect();
        let spikes: Vec<[f64; 2]> = (0..4)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let samples = SampleSet::new(Points::from_rows(2, &pts).unwrap()).unwrap();
        let sig = SpikeSignal::with_unit_weights(Points::from_rows(2, &spikes).unwrap()).unwrap();
        let u = forward_map(&Kernel::Fourier, &samples, &sig).unwrap();
        for (j, s) in pts.iter().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for x in &spikes {
                let ph = std::f64::consts::PI * (s[0] * x[0] + s[1] * x[1]);
                re += ph.cos();
                im += ph.sin();
            }
            let v = u.values[j];
            let scale = (re * re + im * im).sqrt().max(1.0);
            assert!(((v.re - re).powi(2) + (v.im - im).powi(2)).sqrt() <= 1e-15 * scale * 4.0);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let s = [1.7, -2.2];
        let x = [0.3, 0.45];
        for k in [
            Kernel::power_law(1.0).unwrap(),
            Kernel::power_law(0.5).unwrap(),
            Kernel::Exponential,
            Kernel::Fourier,
            Kernel::LogPotential,
        ] {
            let mut g = [C64::new(0.0, 0.0); 2];
            k.value_and_gradient(&s, &x, &mut g).unwrap();
            for t in 0..2 {
                let h = 1e-6;
                let mut xp = x;
                let mut xm = x;
                xp[t] += h;
                xm[t] -= h;
                let fd = (k.evaluate(&s, &xp).unwrap() - k.evaluate(&s, &xm).unwrap()) / (2.0 * h);
                assert!((fd - g[t]).norm() < 1e-8, "{k:?} t={t}: {fd} vs {}", g[t]);
            }
        }
    }

    #[test]
    fn deconvolution_samples_must_avoid_domain() {
        let inside = SampleSet::new(Points::from_rows(2, &[[0.5, 0.5], [2.0, 0.0]]).unwrap()).unwrap();
        assert!(inside.validate_for(&Kernel::power_law(1.0).unwrap()).is_err());
        assert!(inside.validate_for(&Kernel::Fourier).is_ok());
        let boundary = SampleSet::new(Points::from_rows(2, &[[1.0, 0.0]]).unwrap()).unwrap();
        assert!(boundary.validate_for(&Kernel::Exponential).is_err());
    }

    #[test]
    fn complex_evaluation_agrees_on_real_axis() {
        let s = [0.7, -1.3];
        let x = [0.25, 0.5];
        let z = [C64::new(0.25, 0.0), C64::new(0.5, 0.0)];
        let a = Kernel::Fourier.evaluate(&s, &x).unwrap();
        let b = Kernel::Fourier.evaluate_complex(&s, &z).unwrap();
        assert!((a - b).norm() < 1e-15);
        assert!(Kernel::Exponential.evaluate_complex(&s, &z).is_err());
    }

    proptest! {
        #[test]
        fn fourier_has_unit_modulus(s in prop::collection::vec(-10.0f64..10.0, 3),
                                    x in prop::collection::vec(-1.0f64..1.0, 3)) {
            let v = Kernel::Fourier.evaluate(&s, &x).unwrap();
            prop_assert!((v.norm() - 1.0).abs() < 1e-15);
        }

        #[test]
        fn forward_map_is_linear(a in prop::collection::vec(-1.0f64..1.0, 4),
                                 b in prop::collection::vec(-1.0f64..1.0, 4),
                                 wa in 0.1f64..3.0, wb in -3.0f64..-0.1, scale in -5.0f64..5.0) {
            let samples = SampleSet::new(Points::from_rows(2, &[[2.0, 0.5], [-1.5, 3.0], [0.0, -2.5], [4.0, 4.0]]).unwrap()).unwrap();
            let k = Kernel::power_law(1.0).unwrap();
            let sa = SpikeSignal::new(Points::new(2, a).unwrap(), vec![c(wa); 2]).unwrap();
            let sb = SpikeSignal::new(Points::new(2, b).unwrap(), vec![c(wb); 2]).unwrap();
            let ua = forward_map(&k, &samples, &sa).unwrap();
            let ub = forward_map(&k, &samples, &sb).unwrap();
            let uab = forward_map(&k, &samples, &sa.concat(&sb).unwrap()).unwrap();
            for j in 0..4 {
                let sum = ua.values[j] + ub.values[j];
                let scale_ref = ua.values[j].norm() + ub.values[j].norm();
                prop_assert!((uab.values[j] - sum).norm() <= 1e-14 * scale_ref.max(1e-300));
                prop_assert_eq!(uab.values[j].im, 0.0);
            }
            prop_assume!(scale != 0.0);
            let scaled = SpikeSignal::new(sa.spikes.clone(), sa.weights.iter().map(|w| w * scale).collect()).unwrap();
            let us = forward_map(&k, &samples, &scaled).unwrap();
            for j in 0..4 {
                let expect = ua.values[j] * scale;
                prop_assert!((us.values[j] - expect).norm() <= 1e-15 * expect.norm());
            }
        }
    }
}
