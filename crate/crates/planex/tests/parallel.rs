mod common;

use planex::checkpoint::encode;
use planex::config::PipelineConfig;
use planex::parallel::{render_image_par, Rayon};
use planex::pipeline::Driver;
use planex_core::render::{render_image, NoClock, RenderConfig};
use planex_core::scene::Dataset;
use planex_core::synthetic::{make_dataset, SyntheticSpec};
use planex_core::train::{Executor, LogRecord, Serial};

fn same_bits<T: PartialEq + Copy, F: Fn(T) -> u64>(a: &[T], b: &[T], bits: F) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| bits(*x) == bits(*y))
}

#[test]
fn parallel_render_matches_serial_bitwise() {
    let scene = common::small_scene(4);
    let cam = common::front_camera(37, 29);
    for cfg in [RenderConfig::exact(), RenderConfig::default()] {
        let a = render_image(&cam, &scene, &cfg, &NoClock).unwrap();
        let b = render_image_par(&cam, &scene, &cfg, &NoClock).unwrap();
        assert!(same_bits(&a.image.data, &b.image.data, |x: f32| x.to_bits() as u64));
        assert!(same_bits(&a.depth, &b.depth, f64::to_bits));
        assert_eq!(a.stats.evaluations, b.stats.evaluations);
        assert_eq!(a.stats.hits, b.stats.hits);
    }
}

fn run<E: Executor>(config: &PipelineConfig, data: &Dataset, executor: &E) -> Vec<u8> {
    let mut log = |_: &LogRecord| {};
    let mut driver = Driver { config, seed: 3, executor, clock: &NoClock, log: &mut log };
    encode(&driver.full(data).unwrap()).unwrap()
}

#[test]
fn parallel_training_matches_serial_bitwise() {
    let spec = SyntheticSpec {
        planes: 3,
        width: 16,
        height: 16,
        train_views: 3,
        test_views: 1,
        cloud_points: 300,
        ..SyntheticSpec::default()
    };
    let (data, _) = make_dataset(&spec).unwrap();
    let mut config = PipelineConfig::synthetic();
    config.planes = 4;
    config.teacher_hidden = 8;
    config.geometric.iterations = 20;
    config.schedule.teacher_epochs = 1;
    config.schedule.distill_epochs = 5;
    config.schedule.finetune_epochs = 1;
    assert_eq!(run(&config, &data, &Serial), run(&config, &data, &Rayon));
}
