use planex_core::geometry::{
    closest_point, farthest_point_sample_from, intersect_rectangle, point_to_rectangle_distance, PointCloud, Ray,
    Rectangle,
};
use planex_core::math::Vec3;
use planex_core::oracle::{march_intersect, recursive_composite};
use planex_core::render::{composite, gather_hits, render_depth, RadianceSample, RenderConfig};
use proptest::prelude::*;

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn rect() -> impl Strategy<Value = Rectangle> {
    (vec3(1.0), vec3(1.0), vec3(1.0), 0.1f64..2.0, 0.1f64..2.0).prop_filter_map("degenerate frame", |(c, n, u, w, h)| {
        Rectangle::new(c, n, u, w, h).ok()
    })
}

fn ray() -> impl Strategy<Value = Ray> {
    (vec3(3.0), vec3(1.0))
        .prop_filter("zero direction", |(_, d)| d.norm() > 1e-3)
        .prop_map(|(o, d)| Ray::new(o, d, 0.0, 6.0))
}

fn samples(max: usize) -> impl Strategy<Value = Vec<RadianceSample>> {
    prop::collection::vec((0.0f64..10.0, 0.0f64..=1.0, [0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0]), 0..max).prop_map(
        |mut v| {
            v.sort_by(|a, b| a.0.total_cmp(&b.0));
            v.into_iter()
                .enumerate()
                .map(|(k, (t, alpha, color))| RadianceSample {
                    t,
                    color,
                    alpha,
                    plane_index: k,
                })
                .collect()
        },
    )
}

/// Near the rectangle edge, grazing, or near the ends of the ray interval:
/// the closed form and the marching oracle may legitimately disagree.
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

proptest! {
    #[test]
    fn intersection_agrees_with_marching(ray in ray(), r in rect()) {
        prop_assume!(!is_boundary(&ray, &r));
        let exact = intersect_rectangle(&ray, &r, 0).map(|h| h.t);
        let marched = march_intersect(&ray, &r, 1e-4);
        prop_assert_eq!(exact.is_some(), marched.is_some());
        if let (Some(a), Some(b)) = (exact, marched) {
            prop_assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn hits_lie_on_the_rectangle(ray in ray(), r in rect()) {
        if let Some(h) = intersect_rectangle(&ray, &r, 3) {
            prop_assert_eq!(h.plane_index, 3);
            prop_assert!((h.point - ray.at(h.t)).norm() < 1e-9);
            prop_assert!(point_to_rectangle_distance(h.point, &r) < 1e-9);
            prop_assert!(h.t >= ray.t_near && h.t <= ray.t_far);
        }
    }

    #[test]
    fn gathered_hits_are_sorted_and_capped(ray in ray(), rs in prop::collection::vec(rect(), 1..12), cap in 1usize..8) {
        let hits = gather_hits(&ray, &rs, cap);
        prop_assert!(hits.len() <= cap);
        for w in hits.windows(2) {
            prop_assert!(w[0].t < w[1].t || (w[0].t == w[1].t && w[0].plane_index < w[1].plane_index));
        }
        let all = rs.iter().enumerate().filter(|(k, r)| intersect_rectangle(&ray, r, *k).is_some()).count();
        prop_assert_eq!(hits.len(), all.min(cap));
    }

    #[test]
    fn composition_matches_recursion(s in samples(12), bg in [0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0]) {
        let cfg = RenderConfig { background: bg, ..RenderConfig::exact() };
        let c = composite(&s, &cfg).unwrap();
        let pixel = c.pixel(&cfg);
        let oracle = recursive_composite(&s, bg);
        for i in 0..3 {
            prop_assert!((pixel[i] - oracle[i]).abs() < 1e-12);
        }
        prop_assert!((c.total_weight + c.transmittance - 1.0).abs() < 1e-9);
        prop_assert_eq!(c.used, s.len());
    }

    #[test]
    fn depth_is_bounded_by_weighted_sample_depths(s in samples(8)) {
        let cfg = RenderConfig::exact();
        let c = composite(&s, &cfg).unwrap();
        let d = render_depth(&s, &cfg);
        if c.total_weight > 1e-9 {
            let lo = s.iter().map(|x| x.t).fold(f64::INFINITY, f64::min) * c.total_weight;
            let hi = s.iter().map(|x| x.t).fold(f64::NEG_INFINITY, f64::max) * c.total_weight;
            prop_assert!(d >= lo - 1e-9 && d <= hi + 1e-9, "{} not in [{}, {}]", d, lo, hi);
        }
    }

    #[test]
    fn closest_point_beats_every_rectangle_point(x in vec3(3.0), r in rect(), a in -1.0f64..=1.0, b in -1.0f64..=1.0) {
        let (q, [qa, qb]) = closest_point(x, &r);
        prop_assert!(qa.abs() <= 0.5 * r.width + 1e-12 && qb.abs() <= 0.5 * r.height + 1e-12);
        let other = r.to_world(a * 0.5 * r.width, b * 0.5 * r.height);
        prop_assert!((x - q).norm() <= (x - other).norm() + 1e-12);
        // the plane distance is a lower bound
        let plane = (x - r.center).dot(r.normal()).abs();
        prop_assert!(point_to_rectangle_distance(x, &r) >= plane - 1e-12);
    }

    #[test]
    fn farthest_point_sampling_is_greedy(pts in prop::collection::vec(vec3(1.0), 2..120), k in 1usize..12, first in 0usize..1000) {
        let cloud = PointCloud::new(pts.clone());
        let k = k.min(pts.len());
        let first = first % pts.len();
        let sel = farthest_point_sample_from(&cloud, k, first).unwrap();
        prop_assert_eq!(sel[0], first);
        for step in 1..sel.len() {
            let prior = &sel[..step];
            let dist = |i: usize| prior.iter().map(|&j| (pts[i] - pts[j]).norm_squared()).fold(f64::INFINITY, f64::min);
            let chosen = dist(sel[step]);
            prop_assert!(!prior.contains(&sel[step]));
            for i in (0..pts.len()).filter(|i| !prior.contains(i)) {
                prop_assert!(dist(i) <= chosen);
            }
        }
    }
}
