//! Seeded synthetic shapes for smoke tests and the bundled demo dataset.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::{Point3, PointCloud};

pub const SHAPE_NAMES: [&str; 3] = ["sphere", "cube", "cylinder"];

fn unit_sphere_point(rng: &mut impl Rng) -> Point3 {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..2.0 * PI);
    let r = (1.0 - z * z).max(0.0).sqrt();
    [r * phi.cos(), r * phi.sin(), z]
}

fn build(points: Vec<Point3>) -> PointCloud {
    PointCloud::new(points).expect("synthetic points are finite and non-empty")
}

/// Uniform samples on the unit sphere surface.
pub fn sphere(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    build((0..n).map(|_| unit_sphere_point(&mut rng)).collect())
}

/// Uniform samples on the surface of the cube [-0.8, 0.8]^3.
pub fn cube(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 0.8;
    build(
        (0..n)
            .map(|_| {
                let face = rng.random_range(0..6usize);
                let axis = face / 2;
                let sign = if face % 2 == 0 { -h } else { h };
                let mut p = [rng.random_range(-h..=h), rng.random_range(-h..=h), 0.0];
                p.swap(2, axis);
                p[axis] = sign;
                p
            })
            .collect(),
    )
}

/// Uniform samples on a closed cylinder of radius 0.5 and height 2 along z.
pub fn cylinder(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (r, h) = (0.5, 1.0);
    let side = 2.0 * PI * r * 2.0 * h;
    let cap = PI * r * r;
    build(
        (0..n)
            .map(|_| {
                let pick: f64 = rng.random_range(0.0..side + 2.0 * cap);
                let phi: f64 = rng.random_range(0.0..2.0 * PI);
                if pick < side {
                    [r * phi.cos(), r * phi.sin(), rng.random_range(-h..=h)]
                } else {
                    let rho = r * rng.random::<f64>().sqrt();
                    let z = if pick < side + cap { -h } else { h };
                    [rho * phi.cos(), rho * phi.sin(), z]
                }
            })
            .collect(),
    )
}

/// Shape `class` (index into [`SHAPE_NAMES`]) with `n` points.
pub fn shape(class: usize, n: usize, seed: u64) -> PointCloud {
    match class {
        0 => sphere(n, seed),
        1 => cube(n, seed),
        2 => cylinder(n, seed),
        _ => panic!("unknown synthetic class {class}"),
    }
}

/// Two unit spheres centered at x = -1.5 and x = +1.5, labeled part 0 and
/// part 1, half of the points each. Category 0.
pub fn two_spheres(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = n / 2;
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let part = u16::from(i >= half);
        let dx = if part == 0 { -1.5 } else { 1.5 };
        let p = unit_sphere_point(&mut rng);
        points.push([p[0] + dx, p[1], p[2]]);
        labels.push(part);
    }
    build(points)
        .with_labels(labels)
        .expect("one label per point")
        .with_category(0)
}
