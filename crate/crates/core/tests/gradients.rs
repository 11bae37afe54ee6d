use planex_core::geometry::{PointCloud, Ray, Rectangle};
use planex_core::math::Vec3;
use planex_core::oracle::{
    expert_photometric_gradcheck, geometric_gradcheck, network_gradcheck, network_input_gradcheck,
    teacher_photometric_gradcheck,
};
use planex_core::radiance::{NetConfig, RadianceNet};
use planex_core::train::GeometricLossConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-4;
/// Position inputs pass through high Fourier bands (up to 2^7 pi for the
/// teacher); the central-difference truncation error grows with the cube of
/// the frequency, so input and plane-geometry checks use a smaller step.
const INPUT_EPS: f64 = 1e-6;

fn batch(rng: &mut ChaCha8Rng, n: usize, pos_dims: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let pos = (0..n * pos_dims).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut dir = Vec::new();
    for _ in 0..n {
        let d = Vec3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), -1.0).normalized();
        dir.extend(d.to_array());
    }
    let up = (0..n * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (pos, dir, up)
}

#[test]
fn expert_parameter_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..10 {
        let net = RadianceNet::<f64>::new(NetConfig::expert(), seed);
        let (pos, dir, up) = batch(&mut rng, 1, 2);
        let c = network_gradcheck(&net, &pos, &dir, &up, 0..net.param_count(), EPS);
        assert_eq!(c.checked, 6948);
        assert!(c.max_relative_error < 1e-4 && c.kink_max_relative_error < 1e-4, "seed {seed}: {c:?}");
    }
}

#[test]
fn expert_batch_gradient_is_the_sum_of_single_gradients() {
    use planex_core::radiance::{Heads, Tape};
    let net = RadianceNet::<f64>::new(NetConfig::expert(), 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (pos, dir, up) = batch(&mut rng, 2, 2);
    let grad = |pos: &[f64], dir: &[f64], up: &[f64]| {
        let mut tape = Tape::new();
        net.forward_tape(pos, dir, Heads::BOTH, &mut tape);
        let mut g = vec![0.0; net.param_count()];
        net.backward(&tape, up, &mut g, None);
        g
    };
    let both = grad(&pos, &dir, &up);
    let a = grad(&pos[..2], &dir[..3], &up[..4]);
    let b = grad(&pos[2..], &dir[3..], &up[4..]);
    for i in 0..both.len() {
        assert!((both[i] - a[i] - b[i]).abs() < 1e-12);
    }
    let zero = grad(&pos, &dir, &[0.0; 8]);
    assert!(zero.iter().all(|&g| g == 0.0));
}

#[test]
fn teacher_parameter_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let net = RadianceNet::<f64>::new(NetConfig::teacher().with_hidden(32), 5);
    for _ in 0..10 {
        let (pos, dir, up) = batch(&mut rng, 1, 3);
        let c = network_gradcheck(&net, &pos, &dir, &up, 0..net.param_count(), EPS);
        assert!(c.max_relative_error < 1e-4 && c.kink_max_relative_error < 1e-4, "{c:?}");
        let c = network_input_gradcheck(&net, &pos, &dir, &up, INPUT_EPS);
        assert!(c.max_relative_error < 1e-4 && c.kink_max_relative_error < 1e-4, "{c:?}");
    }
}

#[test]
fn default_teacher_gradients_match_on_a_parameter_stride() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let net = RadianceNet::<f64>::new(NetConfig::teacher(), 6);
    let (pos, dir, up) = batch(&mut rng, 2, 3);
    let c = network_gradcheck(&net, &pos, &dir, &up, (0..net.param_count()).step_by(7), EPS);
    assert!(c.max_relative_error < 1e-4 && c.kink_max_relative_error < 1e-4, "{c:?}");
}

fn random_rect(rng: &mut ChaCha8Rng) -> Rectangle {
    let c = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let n = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let u = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    Rectangle::new(c, n, u, rng.gen_range(0.3..1.2), rng.gen_range(0.3..1.2)).unwrap()
}

#[test]
fn geometric_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..5 {
        let planes: Vec<Rectangle> = (0..3).map(|_| random_rect(&mut rng)).collect();
        let points = (0..60)
            .map(|_| Vec3::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)))
            .collect();
        let cloud = PointCloud::new(points);
        let config = GeometricLossConfig {
            lambda_area: 0.01,
            ..GeometricLossConfig::default()
        };
        let c = geometric_gradcheck(&cloud, &planes, &config, EPS);
        assert_eq!(c.checked, 24);
        assert!(c.max_relative_error < 1e-4 && c.kink_max_relative_error < 1e-4, "{c:?}");
    }
}

/// Two overlapping translucent planes facing the camera and four rays that
/// cross both well inside their edges.
fn micro_scene() -> (Vec<Rectangle>, Vec<Ray>) {
    let planes = vec![
        Rectangle::new(Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.1, 0.0, 1.0), Vec3::Y, 2.0, 2.0).unwrap(),
        Rectangle::new(Vec3::new(0.1, 0.0, -0.5), Vec3::new(0.0, 0.2, 1.0), Vec3::Y, 2.0, 1.6).unwrap(),
    ];
    let origin = Vec3::new(0.0, 0.0, 3.0);
    let rays = [(-0.1, -0.1), (0.1, -0.05), (0.0, 0.1), (0.12, 0.12)]
        .iter()
        .map(|&(x, y)| Ray::new(origin, Vec3::new(x, y, -1.0), 0.1, 10.0))
        .collect();
    (planes, rays)
}

#[test]
fn end_to_end_expert_gradients_match_finite_differences() {
    let (planes, rays) = micro_scene();
    let experts: Vec<RadianceNet<f64>> = (0..2).map(|k| RadianceNet::new(NetConfig::expert(), 20 + k)).collect();
    let targets = [[0.9, 0.1, 0.4], [0.2, 0.7, 0.3], [0.5, 0.5, 0.5], [0.0, 1.0, 0.2]];
    let c = expert_photometric_gradcheck(&planes, &experts, &rays, &targets, [0.1, 0.2, 0.3], EPS);
    assert_eq!(c.checked, 2 * 6948);
    assert!(c.max_relative_error < 1e-3 && c.kink_max_relative_error < 1e-3, "{c:?}");
}

#[test]
fn teacher_photometric_gradients_include_plane_geometry() {
    let (planes, rays) = micro_scene();
    let teacher = RadianceNet::<f64>::new(NetConfig::teacher().with_hidden(32), 8);
    let targets = [[0.9, 0.1, 0.4], [0.2, 0.7, 0.3], [0.5, 0.5, 0.5], [0.0, 1.0, 0.2]];
    let (params, geometry) = teacher_photometric_gradcheck(
        &planes,
        &teacher,
        &rays,
        &targets,
        [0.1, 0.2, 0.3],
        0..teacher.param_count(),
        INPUT_EPS,
    );
    assert!(params.max_relative_error < 1e-3 && params.kink_max_relative_error < 1e-3, "{params:?}");
    assert_eq!(geometry.checked, 12);
    assert!(geometry.max_relative_error < 1e-3 && geometry.kink_max_relative_error < 1e-3, "{geometry:?}");
}
