use std::collections::BTreeMap;

use gpc_sense::perturb::{
    apply, brightness, rotate, tilt, write_transformed_set, GeometryOptions, Image, PerturbationKind,
    PerturbationSpec, PerturbationStep,
};
use gpc_sense::randomspace::{sample, ParameterSpace, RandomParameter};
use proptest::prelude::*;

fn smooth(w: u32, h: u32) -> Image {
    let mut px = Vec::with_capacity((w * h * 3) as usize);
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (x as f64 / w as f64, y as f64 / h as f64);
            px.push((127.5 + 100.0 * (3.0 * fx).sin() * (2.0 * fy).cos()).round() as u8);
            px.push((40.0 + 170.0 * fx * fy).round() as u8);
            px.push((200.0 - 150.0 * fy).round() as u8);
        }
    }
    Image::new(w, h, 3, px).unwrap()
}

fn spec() -> PerturbationSpec {
    PerturbationSpec::new(vec![
        PerturbationStep { kind: PerturbationKind::Tilt, parameter: "tilt".into() },
        PerturbationStep { kind: PerturbationKind::Brightness, parameter: "brightness".into() },
        PerturbationStep { kind: PerturbationKind::Rotation, parameter: "rotation".into() },
    ])
    .unwrap()
}

fn png_bytes(img: &Image, dir: &std::path::Path, name: &str) -> Vec<u8> {
    let p = dir.join(name);
    img.write_png(&p).unwrap();
    std::fs::read(p).unwrap()
}

#[test]
fn identity_values_give_identical_png_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let img = smooth(48, 32);
    let opts = GeometryOptions::default();
    let original = png_bytes(&img, dir.path(), "orig.png");
    assert_eq!(png_bytes(&brightness(&img, 1.0).unwrap(), dir.path(), "b.png"), original);
    assert_eq!(png_bytes(&rotate(&img, 0.0, &opts).unwrap(), dir.path(), "r.png"), original);
    assert_eq!(png_bytes(&tilt(&img, 0.0, &opts).unwrap(), dir.path(), "t.png"), original);
    let values = BTreeMap::from([
        ("brightness".to_string(), 1.0),
        ("rotation".to_string(), 0.0),
        ("tilt".to_string(), 0.0),
    ]);
    assert_eq!(png_bytes(&apply(&spec(), &img, &values, &opts).unwrap(), dir.path(), "a.png"), original);
}

#[test]
fn transformed_set_writes_one_png_per_row() {
    let dir = tempfile::tempdir().unwrap();
    let space = ParameterSpace::new(
        vec![
            RandomParameter::uniform("brightness", 0.5, 1.5).unwrap(),
            RandomParameter::uniform("rotation", -20.0, 20.0).unwrap(),
            RandomParameter::uniform("tilt", -30.0, 30.0).unwrap(),
        ],
        4,
    )
    .unwrap();
    let samples = sample(&space, 6).unwrap();
    let paths = write_transformed_set(&spec(), &smooth(24, 16), &samples, &GeometryOptions::default(), dir.path(), &[])
        .unwrap();
    assert_eq!(paths.len(), 6);
    let manifest = std::fs::read_to_string(dir.path().join("manifest.csv")).unwrap();
    let lines: Vec<&str> = manifest.lines().collect();
    assert_eq!(lines[0], "index,brightness,rotation,tilt,file");
    assert_eq!(lines.len(), 7);
    assert!(lines[3].starts_with("2,") && lines[3].ends_with(",sample_2.png"));
    for p in paths {
        assert_eq!(Image::read_png(&p).unwrap().width(), 24);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rotation_round_trip_is_close_in_the_middle(deg in -45.0f64..45.0) {
        let img = smooth(64, 64);
        let opts = GeometryOptions::default();
        let back = rotate(&rotate(&img, deg, &opts).unwrap(), -deg, &opts).unwrap();
        // pixels well inside the inscribed circle never touch the fill
        for y in 0..64u32 {
            for x in 0..64u32 {
                let r = ((x as f64 - 31.5).powi(2) + (y as f64 - 31.5).powi(2)).sqrt();
                if r > 26.0 {
                    continue;
                }
                for c in 0..3 {
                    let d = img.get(x, y, c) as i32 - back.get(x, y, c) as i32;
                    prop_assert!(d.abs() <= 2, "({x},{y},{c}) differs by {d}");
                }
            }
        }
    }

    #[test]
    fn brightness_is_monotone(a in 0.0f64..3.0, b in 0.0f64..3.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let img = smooth(16, 16);
        let (l, h) = (brightness(&img, lo).unwrap(), brightness(&img, hi).unwrap());
        for (x, y) in l.pixels().iter().zip(h.pixels()) {
            prop_assert!(x <= y);
        }
    }
}
