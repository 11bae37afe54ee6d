//! Front-to-back alpha composition, expected depth, and the composition
//! gradient used by photometric training.

use crate::error::{Error, Result};

/// Depth reported for rays that carry too little opacity.
pub const INVALID_DEPTH: f64 = -1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadianceSample {
    pub t: f64,
    pub color: [f64; 3],
    pub alpha: f64,
    pub plane_index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Renormalization {
    /// Blend the residual transmittance with the background color.
    Off,
    /// Divide the accumulated color by the accumulated weight.
    DivideByWeight,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderConfig {
    /// Stop once transmittance drops below this value. Zero disables.
    pub termination_epsilon: f64,
    /// Baked-alpha samples with smaller estimated weight are skipped.
    pub weight_filter_threshold: f64,
    pub background: [f64; 3],
    pub renormalization: Renormalization,
    pub max_hits_per_ray: usize,
    /// Use baked alpha textures when the scene has them.
    pub use_baked_alpha: bool,
    pub t_near: f64,
    pub t_far: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            termination_epsilon: 1e-3,
            weight_filter_threshold: 1e-3,
            background: [0.0; 3],
            renormalization: Renormalization::Off,
            max_hits_per_ray: 32,
            use_baked_alpha: true,
            t_near: 0.0,
            t_far: 1e3,
        }
    }
}

impl RenderConfig {
    /// Exhaustive composition: no early stop, no baked-alpha filtering.
    pub fn exact() -> Self {
        RenderConfig {
            termination_epsilon: 0.0,
            weight_filter_threshold: 0.0,
            use_baked_alpha: false,
            ..RenderConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..1.0).contains(&v);
        if !in_unit(self.termination_epsilon) || !in_unit(self.weight_filter_threshold) {
            return Err(Error::InvalidConfig(
                "termination_epsilon and weight_filter_threshold must lie in [0, 1)".into(),
            ));
        }
        if !(self.t_near >= 0.0 && self.t_far > self.t_near) {
            return Err(Error::InvalidConfig("need 0 <= t_near < t_far".into()));
        }
        if self.max_hits_per_ray == 0 {
            return Err(Error::InvalidConfig("max_hits_per_ray must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Composite {
    /// Accumulated `Σ wⱼ cⱼ`, before background or renormalization.
    pub color: [f64; 3],
    pub total_weight: f64,
    pub transmittance: f64,
    /// Samples consumed before early termination.
    pub used: usize,
}

impl Composite {
    /// Pixel color after background blending or renormalization.
    pub fn pixel(&self, config: &RenderConfig) -> [f64; 3] {
        match config.renormalization {
            Renormalization::DivideByWeight
                if self.total_weight >= config.termination_epsilon && self.total_weight > 0.0 =>
            {
                self.color.map(|c| c / self.total_weight)
            }
            _ => {
                let t = self.transmittance;
                [
                    self.color[0] + t * config.background[0],
                    self.color[1] + t * config.background[1],
                    self.color[2] + t * config.background[2],
                ]
            }
        }
    }
}

fn check_sorted(samples: &[RadianceSample]) -> Result<()> {
    for (i, w) in samples.windows(2).enumerate() {
        let ordered = w[0].t < w[1].t || (w[0].t == w[1].t && w[0].plane_index <= w[1].plane_index);
        if !ordered {
            return Err(Error::UnsortedSamples(i + 1));
        }
    }
    Ok(())
}

/// Front-to-back composition `Σⱼ Πᵢ<ⱼ(1-αᵢ) αⱼ cⱼ`. Sort order is verified
/// in debug builds.
pub fn composite(samples: &[RadianceSample], config: &RenderConfig) -> Result<Composite> {
    if cfg!(debug_assertions) {
        check_sorted(samples)?;
    }
    let eps = config.termination_epsilon;
    let mut color = [0.0; 3];
    let mut total_weight = 0.0;
    let mut transmittance = 1.0;
    let mut used = 0;
    for s in samples {
        if transmittance < eps {
            break;
        }
        let w = transmittance * s.alpha;
        color[0] += w * s.color[0];
        color[1] += w * s.color[1];
        color[2] += w * s.color[2];
        total_weight += w;
        transmittance *= 1.0 - s.alpha;
        used += 1;
    }
    Ok(Composite {
        color,
        total_weight,
        transmittance,
        used,
    })
}

/// Expected depth `Σⱼ Πᵢ<ⱼ(1-αᵢ) αⱼ tⱼ`, or [`INVALID_DEPTH`] when the ray's
/// total weight is below the termination threshold.
pub fn render_depth(samples: &[RadianceSample], config: &RenderConfig) -> f64 {
    let mut depth = 0.0;
    let mut weight = 0.0;
    let mut transmittance = 1.0;
    for s in samples {
        let w = transmittance * s.alpha;
        depth += w * s.t;
        weight += w;
        transmittance *= 1.0 - s.alpha;
    }
    if samples.is_empty() || weight < config.termination_epsilon.max(f64::MIN_POSITIVE) {
        INVALID_DEPTH
    } else {
        depth
    }
}

/// Gradient of the background-blended pixel color with respect to every
/// sample's color and alpha, given `grad_pixel = ∂L/∂pixel`. Uses the
/// back-to-front remainder recursion `Rⱼ = αⱼcⱼ + (1-αⱼ)Rⱼ₊₁`, which avoids
/// dividing by `1-αⱼ`. No early termination.
pub fn composite_backward(
    samples: &[RadianceSample],
    background: [f64; 3],
    grad_pixel: [f64; 3],
    grad_color: &mut [[f64; 3]],
    grad_alpha: &mut [f64],
) {
    let n = samples.len();
    // forward transmittance before each sample
    let mut trans = alloc::vec![1.0; n];
    let mut t = 1.0;
    for (j, s) in samples.iter().enumerate() {
        trans[j] = t;
        t *= 1.0 - s.alpha;
    }
    let mut rest = background;
    for j in (0..n).rev() {
        let s = &samples[j];
        let tj = trans[j];
        let w = tj * s.alpha;
        let mut ga = 0.0;
        for c in 0..3 {
            grad_color[j][c] = grad_pixel[c] * w;
            ga += grad_pixel[c] * tj * (s.color[c] - rest[c]);
        }
        grad_alpha[j] = ga;
        for c in 0..3 {
            rest[c] = s.alpha * s.color[c] + (1.0 - s.alpha) * rest[c];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(t: f64, alpha: f64, color: [f64; 3]) -> RadianceSample {
        RadianceSample {
            t,
            color,
            alpha,
            plane_index: 0,
        }
    }

    #[test]
    fn opaque_first_sample() {
        let c = composite(&[s(1.0, 1.0, [0.2, 0.4, 0.6])], &RenderConfig::exact()).unwrap();
        assert_eq!(c.color, [0.2, 0.4, 0.6]);
        assert_eq!(c.total_weight, 1.0);
        assert_eq!(c.transmittance, 0.0);
    }

    #[test]
    fn half_white_over_black() {
        let c = composite(
            &[s(1.0, 0.5, [1.0; 3]), s(2.0, 1.0, [0.0; 3])],
            &RenderConfig::exact(),
        )
        .unwrap();
        assert_eq!(c.color, [0.5; 3]);
        assert_eq!(c.total_weight, 1.0);
    }

    #[test]
    fn three_sample_weights() {
        let samples = [
            s(1.0, 0.3, [1.0, 0.0, 0.0]),
            s(2.0, 0.5, [0.0, 1.0, 0.0]),
            s(3.0, 1.0, [0.0, 0.0, 1.0]),
        ];
        let c = composite(&samples, &RenderConfig::exact()).unwrap();
        let expect = [0.3, 0.7 * 0.5, 0.7 * 0.5];
        for k in 0..3 {
            assert!((c.color[k] - expect[k]).abs() < 1e-15);
        }
        assert!((c.total_weight - 1.0).abs() < 1e-15);
    }

    #[test]
    fn depth_examples() {
        let cfg = RenderConfig::default();
        assert_eq!(render_depth(&[s(2.0, 1.0, [0.0; 3])], &cfg), 2.0);
        assert_eq!(render_depth(&[], &cfg), INVALID_DEPTH);
        assert_eq!(render_depth(&[s(1.0, 0.5, [0.0; 3]), s(3.0, 1.0, [0.0; 3])], &cfg), 2.0);
    }

    #[test]
    fn unsorted_samples_rejected_in_debug() {
        let r = composite(&[s(2.0, 0.5, [0.0; 3]), s(1.0, 0.5, [0.0; 3])], &RenderConfig::exact());
        if cfg!(debug_assertions) {
            assert_eq!(r, Err(Error::UnsortedSamples(1)));
        }
    }

    #[test]
    fn renormalization_divides_by_weight() {
        let cfg = RenderConfig {
            renormalization: Renormalization::DivideByWeight,
            background: [1.0; 3],
            ..RenderConfig::exact()
        };
        let c = composite(&[s(1.0, 0.5, [0.4, 0.2, 0.8])], &cfg).unwrap();
        let p = c.pixel(&cfg);
        for (a, b) in p.iter().zip([0.4, 0.2, 0.8]) {
            assert!((a - b).abs() < 1e-15);
        }
        let off = RenderConfig {
            renormalization: Renormalization::Off,
            ..cfg
        };
        assert_eq!(c.pixel(&off), [0.7, 0.6, 0.9]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let samples = [
            s(1.0, 0.3, [0.9, 0.1, 0.4]),
            s(2.0, 0.6, [0.2, 0.8, 0.5]),
            s(3.0, 0.45, [0.3, 0.3, 0.7]),
        ];
        let bg = [0.2, 0.5, 0.1];
        let gp = [0.7, -1.1, 0.4];
        let cfg = RenderConfig {
            background: bg,
            ..RenderConfig::exact()
        };
        let loss = |ss: &[RadianceSample]| {
            let p = composite(ss, &cfg).unwrap().pixel(&cfg);
            (0..3).map(|c| p[c] * gp[c]).sum::<f64>()
        };
        let mut gc = [[0.0; 3]; 3];
        let mut ga = [0.0; 3];
        composite_backward(&samples, bg, gp, &mut gc, &mut ga);
        let h = 1e-6;
        for j in 0..3 {
            let mut p = samples;
            let mut m = samples;
            p[j].alpha += h;
            m[j].alpha -= h;
            let fd = (loss(&p) - loss(&m)) / (2.0 * h);
            assert!((fd - ga[j]).abs() < 1e-8, "alpha {j}: {fd} vs {}", ga[j]);
            for c in 0..3 {
                let mut p = samples;
                let mut m = samples;
                p[j].color[c] += h;
                m[j].color[c] -= h;
                let fd = (loss(&p) - loss(&m)) / (2.0 * h);
                assert!((fd - gc[j][c]).abs() < 1e-8);
            }
        }
    }
}
