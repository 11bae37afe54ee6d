//! Slow, independent reference computations used to check the fast paths:
//! central finite differences, ray marching and recursive composition.

use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{PointCloud, Ray, Rectangle};
use crate::math::Vec3;
use crate::radiance::{Heads, RadianceNet, Tape};
use crate::render::RadianceSample;
use crate::train::{expert_loss_and_grad, geometric_loss, teacher_loss_and_grad, GeometricLossConfig, PlaneGradient};

/// Relative error with an absolute floor, so that two vanishing gradients
/// compare equal instead of dividing noise by noise.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Default floor for [`relative_error`] in gradient checks.
pub const GRAD_FLOOR: f64 = 1e-6;

/// Worst agreement over a set of analytic/numeric pairs.
///
/// An entry whose step straddles a kink of the objective (a ReLU switching,
/// a clamp engaging) has no meaningful central difference at that step. Such
/// an entry is recognized by one-sided slopes that disagree by more than the
/// central estimate misses, and is then checked again at a step
/// [`KINK_RECHECK`] times smaller; it is counted in `kinks` and its recheck
/// error goes to `kink_max_relative_error`. Every other entry counts in
/// `max_relative_error`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    pub max_relative_error: f64,
    /// Index of the worst entry.
    pub worst: usize,
    pub kinks: usize,
    pub kink_max_relative_error: f64,
}

/// Step reduction for entries whose step straddles a kink.
pub const KINK_RECHECK: f64 = 1e-3;

impl GradCheck {
    fn push(&mut self, analytic: f64, numeric: f64) {
        let e = relative_error(analytic, numeric, GRAD_FLOOR);
        if e > self.max_relative_error || self.checked == 0 {
            self.max_relative_error = e;
            self.worst = self.checked;
        }
        self.checked += 1;
    }

    /// Checks `analytic` against differences of `f` around `f(0) = f0`.
    fn entry(&mut self, analytic: f64, f0: f64, eps: f64, f: &mut impl FnMut(f64) -> f64) {
        let (fp, fm) = (f(eps), f(-eps));
        let numeric = (fp - fm) / (2.0 * eps);
        let miss = (analytic - numeric).abs();
        let (fwd, bwd) = ((fp - f0) / eps, (f0 - fm) / eps);
        if relative_error(analytic, numeric, GRAD_FLOOR) > KINK_SUSPECT && (fwd - bwd).abs() > miss {
            let small = eps * KINK_RECHECK;
            let recheck = (f(small) - f(-small)) / (2.0 * small);
            let e = relative_error(analytic, recheck, GRAD_FLOOR);
            if e < relative_error(analytic, numeric, GRAD_FLOOR) {
                self.kinks += 1;
                self.kink_max_relative_error = self.kink_max_relative_error.max(e);
                self.checked += 1;
                return;
            }
        }
        self.push(analytic, numeric);
    }

    pub fn merge(&mut self, o: &GradCheck) {
        if o.max_relative_error > self.max_relative_error {
            self.max_relative_error = o.max_relative_error;
            self.worst = self.checked + o.worst;
        }
        self.checked += o.checked;
        self.kinks += o.kinks;
        self.kink_max_relative_error = self.kink_max_relative_error.max(o.kink_max_relative_error);
    }
}

/// Relative error above which an entry is examined for a kink.
const KINK_SUSPECT: f64 = 1e-6;

/// `Σ upstream · outputs` of a network over a batch.
fn net_objective(net: &RadianceNet<f64>, pos: &[f64], dir: &[f64], upstream: &[f64]) -> f64 {
    let mut tape = Tape::new();
    let out = net.forward_tape(pos, dir, Heads::BOTH, &mut tape);
    out.iter().zip(upstream).map(|(o, u)| o * u).sum()
}

/// Checks every parameter gradient in `params` of a network against central
/// differences of `Σ upstream · outputs`. `upstream` has four entries
/// (r, g, b, alpha) per input.
pub fn network_gradcheck(
    net: &RadianceNet<f64>,
    pos: &[f64],
    dir: &[f64],
    upstream: &[f64],
    params: impl IntoIterator<Item = usize>,
    eps: f64,
) -> GradCheck {
    let mut tape = Tape::new();
    net.forward_tape(pos, dir, Heads::BOTH, &mut tape);
    let mut grads = vec![0.0; net.param_count()];
    net.backward(&tape, upstream, &mut grads, None);
    let mut probe = net.clone();
    let f0 = net_objective(net, pos, dir, upstream);
    let mut check = GradCheck::default();
    for i in params {
        let p0 = net.params()[i];
        check.entry(grads[i], f0, eps, &mut |d| {
            probe.params_mut()[i] = p0 + d;
            net_objective(&probe, pos, dir, upstream)
        });
        probe.params_mut()[i] = p0;
    }
    check
}

/// Checks the input-position gradient of a network the same way.
pub fn network_input_gradcheck(net: &RadianceNet<f64>, pos: &[f64], dir: &[f64], upstream: &[f64], eps: f64) -> GradCheck {
    let mut tape = Tape::new();
    net.forward_tape(pos, dir, Heads::BOTH, &mut tape);
    let mut grads = vec![0.0; net.param_count()];
    let mut gpos = vec![0.0; pos.len()];
    net.backward(&tape, upstream, &mut grads, Some(&mut gpos));
    let mut check = GradCheck::default();
    let f0 = net_objective(net, pos, dir, upstream);
    let mut p = pos.to_vec();
    for i in 0..pos.len() {
        check.entry(gpos[i], f0, eps, &mut |d| {
            p[i] = pos[i] + d;
            net_objective(net, &p, dir, upstream)
        });
        p[i] = pos[i];
    }
    check
}

/// The eight scalar coordinates of a [`PlaneGradient`] in a fixed order:
/// center xyz, rotation xyz, log width, log height.
pub fn plane_gradient_coords(g: &PlaneGradient) -> [f64; 8] {
    [
        g.center.x,
        g.center.y,
        g.center.z,
        g.rotation.x,
        g.rotation.y,
        g.rotation.z,
        g.log_width,
        g.log_height,
    ]
}

/// Moves coordinate `coord` (ordered as in [`plane_gradient_coords`]) of a
/// rectangle by `d`.
pub fn perturb_rectangle(rect: &Rectangle, coord: usize, d: f64) -> Rectangle {
    let mut r = *rect;
    let mut axis = [0.0; 3];
    match coord {
        0..=2 => {
            axis[coord] = d;
            r.center = r.center + Vec3::from_array(axis);
        }
        3..=5 => {
            axis[coord - 3] = d;
            r.rotate(Vec3::from_array(axis)).expect("small rotation keeps the frame valid");
        }
        6 => r.width *= crate::math::exp(d),
        7 => r.height *= crate::math::exp(d),
        _ => panic!("plane coordinate out of range"),
    }
    r
}

fn plane_gradcheck(
    planes: &[Rectangle],
    analytic: &[PlaneGradient],
    coords: &[usize],
    eps: f64,
    mut loss: impl FnMut(&[Rectangle]) -> f64,
) -> GradCheck {
    let mut check = GradCheck::default();
    let f0 = loss(planes);
    let mut probe = planes.to_vec();
    for (k, g) in analytic.iter().enumerate() {
        let a = plane_gradient_coords(g);
        for &c in coords {
            check.entry(a[c], f0, eps, &mut |d| {
                probe[k] = perturb_rectangle(&planes[k], c, d);
                loss(&probe)
            });
            probe[k] = planes[k];
        }
    }
    check
}

/// Geometric loss gradient with respect to every plane coordinate.
pub fn geometric_gradcheck(cloud: &PointCloud, planes: &[Rectangle], config: &GeometricLossConfig, eps: f64) -> GradCheck {
    let (_, grads) = geometric_loss(cloud, planes, config).expect("non-empty inputs");
    plane_gradcheck(planes, &grads, &[0, 1, 2, 3, 4, 5, 6, 7], eps, |p| {
        geometric_loss(cloud, p, config).expect("non-empty inputs").0
    })
}

/// Photometric loss through intersection, expert evaluation and composition,
/// checked for every parameter of every expert.
pub fn expert_photometric_gradcheck(
    planes: &[Rectangle],
    experts: &[RadianceNet<f64>],
    rays: &[Ray],
    targets: &[[f64; 3]],
    background: [f64; 3],
    eps: f64,
) -> GradCheck {
    let max_hits = planes.len();
    let mut grads: Vec<Vec<f64>> = experts.iter().map(|e| vec![0.0; e.param_count()]).collect();
    expert_loss_and_grad(planes, experts, None, rays, targets, background, max_hits, &mut grads);
    let loss = |nets: &[RadianceNet<f64>]| {
        let mut scratch: Vec<Vec<f64>> = nets.iter().map(|e| vec![0.0; e.param_count()]).collect();
        expert_loss_and_grad(planes, nets, None, rays, targets, background, max_hits, &mut scratch)
    };
    let f0 = loss(experts);
    let mut probe = experts.to_vec();
    let mut check = GradCheck::default();
    for k in 0..experts.len() {
        for i in 0..experts[k].param_count() {
            let p0 = experts[k].params()[i];
            check.entry(grads[k][i], f0, eps, &mut |d| {
                probe[k].params_mut()[i] = p0 + d;
                loss(&probe)
            });
            probe[k].params_mut()[i] = p0;
        }
    }
    check
}

/// Teacher photometric loss: gradients for the listed teacher parameters and
/// for plane center and orientation. The ray set must not cross any
/// rectangle edge under the perturbation.
pub fn teacher_photometric_gradcheck(
    planes: &[Rectangle],
    teacher: &RadianceNet<f64>,
    rays: &[Ray],
    targets: &[[f64; 3]],
    background: [f64; 3],
    params: impl IntoIterator<Item = usize>,
    eps: f64,
) -> (GradCheck, GradCheck) {
    let max_hits = planes.len();
    let mut grads = vec![0.0; teacher.param_count()];
    let mut pg = vec![PlaneGradient::default(); planes.len()];
    teacher_loss_and_grad(planes, teacher, rays, targets, background, max_hits, &mut grads, Some(&mut pg));
    let mut scratch = vec![0.0; teacher.param_count()];
    let loss = |net: &RadianceNet<f64>, p: &[Rectangle], scratch: &mut [f64]| {
        teacher_loss_and_grad(p, net, rays, targets, background, max_hits, scratch, None)
    };
    let mut probe = teacher.clone();
    let f0 = loss(teacher, planes, &mut scratch);
    let mut params_check = GradCheck::default();
    for i in params {
        let p0 = teacher.params()[i];
        params_check.entry(grads[i], f0, eps, &mut |d| {
            probe.params_mut()[i] = p0 + d;
            loss(&probe, planes, &mut scratch)
        });
        probe.params_mut()[i] = p0;
    }
    let plane_check = plane_gradcheck(planes, &pg, &[0, 1, 2, 3, 4, 5], eps, |p| loss(teacher, p, &mut scratch));
    (params_check, plane_check)
}

/// Ray/rectangle hit found by marching along the ray in steps of `dt` and
/// bisecting the first sign change of the signed plane distance.
pub fn march_intersect(ray: &Ray, rect: &Rectangle, dt: f64) -> Option<f64> {
    let n = rect.normal();
    let side = |t: f64| (ray.at(t) - rect.center).dot(n);
    let inside = |t: f64| {
        let (a, b) = rect.local_coords(ray.at(t));
        a.abs() <= 0.5 * rect.width && b.abs() <= 0.5 * rect.height
    };
    let mut t0 = ray.t_near;
    let mut s0 = side(t0);
    if s0 == 0.0 {
        return inside(t0).then_some(t0);
    }
    while t0 < ray.t_far {
        let t1 = (t0 + dt).min(ray.t_far);
        let s1 = side(t1);
        if s1 == 0.0 || (s0 < 0.0) != (s1 < 0.0) {
            let (mut lo, mut hi) = (t0, t1);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if (side(mid) < 0.0) == (s0 < 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t = 0.5 * (lo + hi);
            return inside(t).then_some(t);
        }
        t0 = t1;
        s0 = s1;
    }
    None
}

/// Front-to-back recursion `C(s₀…) = α₀c₀ + (1-α₀) C(s₁…)` ending in the
/// background color.
pub fn recursive_composite(samples: &[RadianceSample], background: [f64; 3]) -> [f64; 3] {
    match samples.split_first() {
        None => background,
        Some((s, rest)) => {
            let c = recursive_composite(rest, background);
            [
                s.alpha * s.color[0] + (1.0 - s.alpha) * c[0],
                s.alpha * s.color[1] + (1.0 - s.alpha) * c[1],
                s.alpha * s.color[2] + (1.0 - s.alpha) * c[2],
            ]
        }
    }
}
