//! Acceptance suite. Runs every criterion, prints one line each and exits
//! non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use planex::checkpoint::{decode, encode, Checkpoint};
use planex::config::PipelineConfig;
use planex::manifest::quantize_images;
use planex::parallel::{render_image_par, Rayon, WallClock};
use planex::pipeline::{self, evaluate, Driver};
use planex_core::geometry::{init_planes, intersect_rectangle, InitConfig, Ray, Rectangle};
use planex_core::math::Vec3;
use planex_core::oracle::{
    expert_photometric_gradcheck, geometric_gradcheck, march_intersect, network_gradcheck, recursive_composite,
    GradCheck,
};
use planex_core::radiance::{NetConfig, RadianceNet};
use planex_core::render::{composite, gather_hits, NoClock, RadianceSample, RenderConfig, INVALID_DEPTH};
use planex_core::scene::{Dataset, Split};
use planex_core::synthetic::{analytic_depth, make_dataset, rectangle_cloud, GroundTruthScene, SyntheticSpec};
use planex_core::train::{fit_planes, psnr_from_mse, mse, Executor, GeometricLossConfig, LogRecord, Serial};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn vec3(rng: &mut ChaCha8Rng, r: f64) -> Vec3 {
    Vec3::new(rng.gen_range(-r..r), rng.gen_range(-r..r), rng.gen_range(-r..r))
}

fn random_rect(rng: &mut ChaCha8Rng) -> Rectangle {
    loop {
        let (c, n, u) = (vec3(rng, 1.0), vec3(rng, 1.0), vec3(rng, 1.0));
        if let Ok(r) = Rectangle::new(c, n, u, rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0)) {
            return r;
        }
    }
}

/// Grazing rays, hits near either end of the ray interval and hits near an
/// edge, where the marching oracle is not trustworthy.
fn is_boundary(ray: &Ray, r: &Rectangle) -> bool {
    let denom = ray.dir.dot(r.normal());
    if denom.abs() < 1e-3 {
        return true;
    }
    let t = (r.center - ray.origin).dot(r.normal()) / denom;
    if (t - ray.t_near).abs() < 1e-3 || (t - ray.t_far).abs() < 1e-3 {
        return true;
    }
    let (a, b) = r.local_coords(ray.at(t));
    (a.abs() - 0.5 * r.width).abs() < 1e-3 || (b.abs() - 0.5 * r.height).abs() < 1e-3
}

fn intersection_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut hits, mut boundary, mut disagree) = (0, 0, 0);
    let mut max_dt: f64 = 0.0;
    for _ in 0..10_000 {
        let rect = random_rect(&mut rng);
        let origin = vec3(&mut rng, 3.0);
        // aim near the rectangle so that hits and misses are both common
        let target = rect.to_world(rng.gen_range(-0.8..0.8) * rect.width, rng.gen_range(-0.8..0.8) * rect.height);
        let dir = target - origin;
        if dir.norm() < 1e-6 {
            continue;
        }
        let ray = Ray::new(origin, dir, 0.0, 8.0);
        if is_boundary(&ray, &rect) {
            boundary += 1;
            continue;
        }
        let exact = intersect_rectangle(&ray, &rect, 0).map(|h| h.t);
        let marched = march_intersect(&ray, &rect, 1e-4);
        match (exact, marched) {
            (Some(a), Some(b)) => {
                hits += 1;
                max_dt = max_dt.max((a - b).abs());
            }
            (None, None) => {}
            _ => disagree += 1,
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        disagree == 0 && max_dt < 1e-3 && secs < 60.0,
        format!("10000 pairs, {hits} hits, {boundary} boundary skipped, {disagree} disagreements, max |dt| {max_dt:.2e}, {secs:.1}s"),
    )
}

fn composition_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut max_color, mut max_sum): (f64, f64) = (0.0, 0.0);
    for _ in 0..1000 {
        let n = rng.gen_range(0..24);
        let mut ts: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
        ts.sort_by(f64::total_cmp);
        let samples: Vec<RadianceSample> = ts
            .iter()
            .enumerate()
            .map(|(k, &t)| RadianceSample {
                t,
                color: [rng.gen(), rng.gen(), rng.gen()],
                alpha: rng.gen(),
                plane_index: k,
            })
            .collect();
        let bg = [rng.gen(), rng.gen(), rng.gen()];
        let cfg = RenderConfig {
            background: bg,
            ..RenderConfig::exact()
        };
        let c = composite(&samples, &cfg).expect("valid samples");
        let px = c.pixel(&cfg);
        let oracle = recursive_composite(&samples, bg);
        for i in 0..3 {
            max_color = max_color.max((px[i] - oracle[i]).abs());
        }
        max_sum = max_sum.max((c.total_weight + c.transmittance - 1.0).abs());
    }
    outcome(
        max_color <= 1e-12 && max_sum <= 1e-9,
        format!("1000 lists, max color error {max_color:.1e}, max |W + T - 1| {max_sum:.1e}"),
    )
}

fn unit_batch(rng: &mut ChaCha8Rng, pos_dims: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let pos = (0..pos_dims).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let d = Vec3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), -1.0).normalized();
    let up = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (pos, d.to_array().to_vec(), up)
}

fn gradient_suite() -> Outcome {
    const EPS: f64 = 1e-4;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    let mut expert = GradCheck::default();
    for seed in 0..10 {
        let net = RadianceNet::<f64>::new(NetConfig::expert(), seed);
        let (pos, dir, up) = unit_batch(&mut rng, 2);
        expert.merge(&network_gradcheck(&net, &pos, &dir, &up, 0..net.param_count(), EPS));
    }

    let mut teacher = GradCheck::default();
    let net = RadianceNet::<f64>::new(NetConfig::teacher(), 4);
    for _ in 0..2 {
        let (pos, dir, up) = unit_batch(&mut rng, 3);
        teacher.merge(&network_gradcheck(&net, &pos, &dir, &up, 0..net.param_count(), EPS));
    }

    let mut geometric = GradCheck::default();
    for _ in 0..5 {
        let planes: Vec<Rectangle> = (0..3).map(|_| random_rect(&mut rng)).collect();
        let cloud = planex_core::geometry::PointCloud::new((0..60).map(|_| vec3(&mut rng, 1.5)).collect());
        let config = GeometricLossConfig {
            lambda_area: 0.01,
            ..GeometricLossConfig::default()
        };
        geometric.merge(&geometric_gradcheck(&cloud, &planes, &config, EPS));
    }

    let planes = vec![
        Rectangle::new(Vec3::ZERO, Vec3::new(0.1, 0.0, 1.0), Vec3::Y, 2.0, 2.0).unwrap(),
        Rectangle::new(Vec3::new(0.1, 0.0, -0.5), Vec3::new(0.0, 0.2, 1.0), Vec3::Y, 2.0, 1.6).unwrap(),
    ];
    let origin = Vec3::new(0.0, 0.0, 3.0);
    let rays: Vec<Ray> = [(-0.1, -0.1), (0.1, -0.05), (0.0, 0.1), (0.12, 0.12)]
        .iter()
        .map(|&(x, y)| Ray::new(origin, Vec3::new(x, y, -1.0), 0.1, 10.0))
        .collect();
    let experts: Vec<RadianceNet<f64>> = (0..2).map(|k| RadianceNet::new(NetConfig::expert(), 20 + k)).collect();
    let targets = [[0.9, 0.1, 0.4], [0.2, 0.7, 0.3], [0.5, 0.5, 0.5], [0.0, 1.0, 0.2]];
    let end_to_end = expert_photometric_gradcheck(&planes, &experts, &rays, &targets, [0.1, 0.2, 0.3], EPS);

    let secs = start.elapsed().as_secs_f64();
    let within = |c: &GradCheck, tol: f64| c.max_relative_error < tol && c.kink_max_relative_error < tol;
    let pass = within(&expert, 1e-4)
        && within(&teacher, 1e-4)
        && within(&geometric, 1e-4)
        && within(&end_to_end, 1e-3)
        && secs < 120.0;
    let show = |c: &GradCheck| {
        format!(
            "{:.1e} over {} ({} at kinks, rechecked {:.1e})",
            c.max_relative_error, c.checked, c.kinks, c.kink_max_relative_error
        )
    };
    outcome(
        pass,
        format!(
            "max rel err: expert {}, teacher {}, geometric {}, end-to-end {}, {secs:.1}s",
            show(&expert),
            show(&teacher),
            show(&geometric),
            show(&end_to_end)
        ),
    )
}

fn fit_trend() -> Outcome {
    let start = Instant::now();
    let ks = [5usize, 10, 20, 40];
    let mut means = Vec::new();
    for &k in &ks {
        let mut sum = 0.0;
        for seed in 0..3 {
            let (cloud, _) = rectangle_cloud(20, 4000, seed).expect("cloud");
            let init = init_planes(&cloud, k, &InitConfig::default()).expect("init");
            sum += fit_planes(&cloud, &init, &GeometricLossConfig::default()).expect("fit").rmse;
        }
        means.push(sum / 3.0);
    }
    let secs = start.elapsed().as_secs_f64();
    let monotone = means.windows(2).all(|w| w[1] <= w[0]);
    let at20 = means[2];
    let list: Vec<String> = ks.iter().zip(&means).map(|(k, m)| format!("K={k} {m:.2e}")).collect();
    outcome(
        monotone && at20 < 1e-3 && secs < 300.0,
        format!("mean RMSE {}, {secs:.1}s", list.join(", ")),
    )
}

fn test_psnr(ck: &Checkpoint, data: &Dataset) -> f64 {
    let cfg = RenderConfig {
        background: data.background,
        t_near: data.near,
        t_far: data.far,
        ..RenderConfig::exact()
    };
    evaluate(&ck.scene, data, Split::Test, &cfg).expect("evaluation").mean_psnr
}

fn overfit(config: &PipelineConfig, data: &Dataset) -> (Outcome, Checkpoint) {
    let start = Instant::now();
    let clock = WallClock::new();
    let mut log = |_: &LogRecord| {};
    let mut driver = Driver {
        config,
        seed: 0,
        executor: &Rayon,
        clock: &clock,
        log: &mut log,
    };
    let full = driver.full(data).expect("full pipeline");
    let full_secs = start.elapsed().as_secs_f64();
    let init_only = driver.init_only(data).expect("init-only pipeline");
    let (a, b) = (test_psnr(&full, data), test_psnr(&init_only, data));
    (
        outcome(
            a > 30.0 && a - b >= 2.0 && full_secs < 900.0,
            format!(
                "held-out PSNR {a:.2} dB, init-only {b:.2} dB, gain {:.2} dB, pipeline {full_secs:.0}s",
                a - b
            ),
        ),
        full,
    )
}

fn baking_efficiency(config: &PipelineConfig, ck: &Checkpoint, data: &Dataset) -> Outcome {
    let baked = pipeline::bake(ck.clone(), config.bake_resolution).expect("bake");
    let fast = RenderConfig {
        background: data.background,
        t_near: data.near,
        t_far: data.far,
        termination_epsilon: 1e-3,
        weight_filter_threshold: 1e-3,
        use_baked_alpha: true,
        ..RenderConfig::default()
    };
    let exact = RenderConfig {
        use_baked_alpha: false,
        termination_epsilon: 0.0,
        weight_filter_threshold: 0.0,
        ..fast
    };
    let (mut hits, mut evals, mut covered) = (0, 0, 0);
    let (mut se_fast, mut se_exact, mut n) = (0.0, 0.0, 0.0);
    for f in data.split(Split::Test) {
        for y in 0..f.camera.height {
            for x in 0..f.camera.width {
                let ray = f.camera.generate_ray(x, y, data.near, data.far).unwrap();
                covered += usize::from(!gather_hits(&ray, &baked.scene.planes, fast.max_hits_per_ray).is_empty());
            }
        }
        let a = render_image_par(&f.camera, &baked.scene, &fast, &NoClock).expect("render");
        let b = render_image_par(&f.camera, &baked.scene, &exact, &NoClock).expect("render");
        hits += b.stats.evaluations;
        evals += a.stats.evaluations;
        se_fast += mse(&a.image, &f.image).unwrap();
        se_exact += mse(&b.image, &f.image).unwrap();
        n += 1.0;
    }
    let skipped = 1.0 - evals as f64 / hits as f64;
    // an opaque first hit can at best hide every later hit on its ray
    let ceiling = 1.0 - covered as f64 / hits as f64;
    let dpsnr = psnr_from_mse(se_fast / n) - psnr_from_mse(se_exact / n);
    outcome(
        skipped >= 0.4 && dpsnr.abs() < 0.1,
        format!(
            "{:.1}% of expert evaluations skipped ({:.1}% of hits lie behind a ray's first hit), PSNR change {dpsnr:+.3} dB",
            100.0 * skipped,
            100.0 * ceiling
        ),
    )
}

fn depth_accuracy(ck: &Checkpoint, gt: &GroundTruthScene, data: &Dataset) -> Outcome {
    assert!(gt.is_opaque());
    let cfg = RenderConfig {
        background: data.background,
        t_near: data.near,
        t_far: data.far,
        ..RenderConfig::exact()
    };
    let mut errors = Vec::new();
    let mut missing = 0;
    for f in data.split(Split::Test) {
        let out = render_image_par(&f.camera, &ck.scene, &cfg, &NoClock).expect("render");
        let truth = analytic_depth(gt, &f.camera, data.near, data.far).expect("depth");
        for (d, t) in out.depth.iter().zip(truth) {
            match t {
                Some(t) if *d != INVALID_DEPTH => errors.push((d - t).abs()),
                Some(_) => missing += 1,
                None => {}
            }
        }
    }
    errors.sort_by(f64::total_cmp);
    let median = errors[errors.len() / 2];
    outcome(
        median < 1e-2,
        format!("median |depth error| {median:.2e} over {} pixels ({missing} without depth)", errors.len()),
    )
}

fn small_config() -> PipelineConfig {
    let mut c = PipelineConfig::synthetic();
    c.planes = 6;
    c.teacher_hidden = 16;
    c.geometric.iterations = 100;
    c.schedule.teacher_epochs = 2;
    c.schedule.distill_epochs = 20;
    c.schedule.finetune_epochs = 2;
    c
}

fn run_small<E: Executor>(config: &PipelineConfig, data: &Dataset, executor: &E) -> Vec<u8> {
    let mut log = |_: &LogRecord| {};
    let mut driver = Driver {
        config,
        seed: 7,
        executor,
        clock: &NoClock,
        log: &mut log,
    };
    encode(&driver.full(data).expect("pipeline")).expect("encode")
}

fn determinism() -> Outcome {
    let spec = SyntheticSpec {
        planes: 4,
        width: 24,
        height: 24,
        train_views: 4,
        test_views: 1,
        cloud_points: 800,
        ..SyntheticSpec::default()
    };
    let (mut data, _) = make_dataset(&spec).expect("dataset");
    quantize_images(&mut data);
    let config = small_config();
    let a = run_small(&config, &data, &Rayon);
    let b = run_small(&config, &data, &Rayon);
    let c = run_small(&config, &data, &Serial);
    let runs_equal = a == b && a == c;

    let ck = decode(&a).expect("decode");
    let back = decode(&encode(&ck).expect("encode")).expect("decode");
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut forward_equal = true;
    for _ in 0..64 {
        let pos = [rng.gen_range(-1.0f32..1.0), rng.gen_range(-1.0f32..1.0), rng.gen_range(-1.0f32..1.0)];
        let dir = Vec3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), -1.0).normalized();
        let dir = [dir.x as f32, dir.y as f32, dir.z as f32];
        for (x, y) in ck.scene.experts.iter().zip(&back.scene.experts) {
            forward_equal &= bits(x.eval(&pos[..2], &dir)) == bits(y.eval(&pos[..2], &dir));
        }
        let (x, y) = (ck.teacher.as_ref().unwrap(), back.teacher.as_ref().unwrap());
        forward_equal &= bits(x.eval(&pos, &dir)) == bits(y.eval(&pos, &dir));
    }
    let frame = data.split(Split::Test).next().unwrap();
    let cfg = RenderConfig::exact();
    let ra = render_image_par(&frame.camera, &ck.scene, &cfg, &NoClock).unwrap();
    let rb = render_image_par(&frame.camera, &back.scene, &cfg, &NoClock).unwrap();
    let render_equal = ra.image.data.iter().map(|v| v.to_bits()).eq(rb.image.data.iter().map(|v| v.to_bits()));
    outcome(
        runs_equal && forward_equal && render_equal,
        format!(
            "repeat runs identical: {}, parallel = serial: {}, round-trip forward identical: {}, render identical: {} ({} bytes)",
            a == b,
            a == c,
            forward_equal,
            render_equal,
            a.len()
        ),
    )
}

fn bits((c, a): ([f32; 3], f32)) -> [u32; 4] {
    [c[0].to_bits(), c[1].to_bits(), c[2].to_bits(), a.to_bits()]
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut report = |n: usize, name: &'static str, o: Outcome| {
        println!("criterion {n} {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    };
    report(1, "intersection oracle", intersection_oracle());
    report(2, "composition exactness", composition_exactness());
    report(3, "gradient suite", gradient_suite());
    report(4, "fit RMSE trend", fit_trend());

    let (mut data, gt) = make_dataset(&SyntheticSpec::default()).expect("dataset");
    quantize_images(&mut data);
    let config = PipelineConfig::synthetic();
    let (o, trained) = overfit(&config, &data);
    report(5, "overfit pipeline", o);
    report(6, "baking and termination", baking_efficiency(&config, &trained, &data));
    report(7, "depth", depth_accuracy(&trained, &gt, &data));
    report(8, "determinism and persistence", determinism());

    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
