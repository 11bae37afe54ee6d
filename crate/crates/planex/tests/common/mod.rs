#![allow(dead_code)]

use planex_core::geometry::Rectangle;
use planex_core::math::Vec3;
use planex_core::radiance::NetConfig;
use planex_core::render::PinholeCamera;
use planex_core::scene::Scene;
use planex_core::train::Stage;
use planex::checkpoint::Checkpoint;

/// Two overlapping rectangles facing +z with fresh experts.
pub fn small_scene(seed: u64) -> Scene {
    let planes = vec![
        Rectangle::new(Vec3::new(0.0, 0.0, 0.2), Vec3::Z, Vec3::Y, 1.0, 0.8).unwrap(),
        Rectangle::new(Vec3::new(0.2, -0.1, -0.2), Vec3::new(0.1, 0.0, 1.0), Vec3::Y, 0.9, 1.1).unwrap(),
    ];
    Scene::with_new_experts(planes, NetConfig::expert(), seed, [0.1, 0.2, 0.3])
}

pub fn small_checkpoint(seed: u64) -> Checkpoint {
    Checkpoint {
        stage: Stage::Finetune,
        seed,
        scene: small_scene(seed),
        teacher: None,
    }
}

pub fn front_camera(w: usize, h: usize) -> PinholeCamera {
    PinholeCamera::look_at(Vec3::new(0.3, 0.2, 3.0), Vec3::ZERO, Vec3::Y, 0.7, w, h)
}
