use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use raycanopy::raycloud::{classify_nonreturns, load_raycloud, save_raycloud, save_raycloud_csv};
use raycanopy::{Error, RawMeasurement, Ray, RayCloud, Vec3};

const MAX_RANGE: f64 = 20.0;

fn random_cloud(n: usize, seed: u64) -> RayCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rays = (0..n)
        .map(|i| {
            let origin = Vec3::new(
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
                rng.random_range(0.5..2.0),
            );
            let dir = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            let contact = rng.random_bool(0.8);
            let range = if contact {
                rng.random_range(0.1..MAX_RANGE)
            } else {
                MAX_RANGE
            };
            Ray::new(origin, origin + dir * range, 1000.0 + i as f64 * 1e-4, contact)
        })
        .collect();
    RayCloud::new(rays, MAX_RANGE, "global").unwrap()
}

fn assert_same(a: &RayCloud, b: &RayCloud) {
    assert_eq!(a.len(), b.len());
    assert_eq!(a.max_range(), b.max_range());
    for (x, y) in a.rays().iter().zip(b.rays()) {
        assert_eq!(x.endpoint, y.endpoint);
        assert!((x.origin - y.origin).norm() < 1e-6);
        assert!((x.time - y.time).abs() < 1e-6);
        assert_eq!(x.contact, y.contact);
    }
}

#[test]
fn million_ray_ply_round_trip() {
    let cloud = random_cloud(1_000_000, 31);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.ply");
    save_raycloud(&cloud, &path).unwrap();
    assert_same(&cloud, &load_raycloud(&path).unwrap());
}

#[test]
fn csv_fallback_round_trip() {
    let cloud = random_cloud(2000, 32);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("small.csv");
    save_raycloud_csv(&cloud, &path).unwrap();
    assert_same(&cloud, &load_raycloud(&path).unwrap());
}

#[test]
fn empty_and_single_ray_files() {
    let dir = tempfile::tempdir().unwrap();
    let empty = RayCloud::empty(MAX_RANGE, "global");
    let path = dir.path().join("empty.ply");
    save_raycloud(&empty, &path).unwrap();
    assert!(load_raycloud(&path).unwrap().is_empty());

    let one = random_cloud(1, 33);
    save_raycloud(&one, &path).unwrap();
    assert_same(&one, &load_raycloud(&path).unwrap());
}

#[test]
fn overlong_ray_in_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    let text = "# max_range 5\nx,y,z,nx,ny,nz,time,flags\n1,0,0,-1,0,0,0,1\n9,0,0,-9,0,0,1,1\n";
    std::fs::write(&path, text).unwrap();
    match load_raycloud(&path) {
        Err(Error::InvalidRay { index, .. }) => assert_eq!(index, 1),
        other => panic!("expected an invalid-ray error, got {other:?}"),
    }
}

fn measurement(rng: &mut ChaCha8Rng, t: f64) -> RawMeasurement {
    let direction = Vec3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    )
    .normalize();
    RawMeasurement {
        origin: Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), 1.5),
        direction,
        range: rng.random_bool(0.6).then(|| rng.random_range(0.2..MAX_RANGE)),
        time: t,
    }
}

#[test]
fn classification_counts_returns_and_upward_misses() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let ms: Vec<RawMeasurement> = (0..20_000)
        .map(|i| measurement(&mut rng, (20_000 - i) as f64 * 0.01))
        .collect();
    let returns = ms.iter().filter(|m| m.range.is_some()).count();
    let upward = ms.iter().filter(|m| m.range.is_none() && m.direction.z > 0.0).count();
    let cloud = classify_nonreturns(&ms, MAX_RANGE).unwrap();
    assert_eq!(cloud.len(), returns + upward);
    assert_eq!(cloud.rays().iter().filter(|r| r.contact).count(), returns);
    assert!(cloud.rays().windows(2).all(|w| w[0].time <= w[1].time));
    assert!(cloud.rays().iter().all(|r| r.length() <= MAX_RANGE + 1e-6));
}

#[test]
fn classification_examples() {
    let m = |dir: Vec3, range: Option<f64>| RawMeasurement {
        origin: Vec3::new(1.0, 2.0, 3.0),
        direction: dir,
        range,
        time: 0.0,
    };
    let c = classify_nonreturns(&[m(Vec3::x(), Some(5.0))], 40.0).unwrap();
    assert!(c.rays()[0].contact && (c.rays()[0].length() - 5.0).abs() < 1e-12);
    let c = classify_nonreturns(&[m(Vec3::z(), None)], 40.0).unwrap();
    assert_eq!(c.rays()[0].endpoint, Vec3::new(1.0, 2.0, 43.0));
    assert!(!c.rays()[0].contact);
    assert!(classify_nonreturns(&[m(-Vec3::z(), None)], 40.0).unwrap().is_empty());
    assert!(classify_nonreturns(&[m(Vec3::x(), None)], 40.0).unwrap().is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn crop_matches_per_ray_filter(seed in any::<u64>(),
                                   lo in prop::array::uniform3(-60.0f64..20.0),
                                   size in prop::array::uniform3(0.1f64..80.0)) {
        let cloud = random_cloud(500, seed);
        let min = Vec3::from(lo);
        let max = min + Vec3::from(size);
        let cropped = cloud.crop_box(min, max).unwrap();
        let expected: Vec<Ray> = cloud
            .rays()
            .iter()
            .filter(|r| (0..3).all(|a| min[a] <= r.endpoint[a] && r.endpoint[a] <= max[a]))
            .copied()
            .collect();
        prop_assert_eq!(cropped.rays(), expected.as_slice());
    }
}

#[test]
fn crop_extremes() {
    let cloud = random_cloud(300, 35);
    let all = cloud.crop_box(Vec3::repeat(-1e3), Vec3::repeat(1e3)).unwrap();
    assert_eq!(all, cloud);
    assert!(cloud
        .crop_box(Vec3::repeat(500.0), Vec3::repeat(600.0))
        .unwrap()
        .is_empty());
    assert!(cloud.crop_box(Vec3::zeros(), Vec3::new(1.0, 0.0, 1.0)).is_err());
}
