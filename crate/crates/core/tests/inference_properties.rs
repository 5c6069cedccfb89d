use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sharpbounds::applications::ipw::{ipw_bounds_weighted, IpwEstimand, IpwSensitivity};
use sharpbounds::applications::Conditioning;
use sharpbounds::inference::{percentile_bootstrap, percentile_bootstrap_multi};

struct Data {
    z: Vec<f64>,
    y: Vec<f64>,
    e: Vec<f64>,
    keys: Vec<usize>,
}

fn data(n: usize) -> Data {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let e_of = [0.25, 0.5, 0.75];
    let mut d = Data { z: vec![], y: vec![], e: vec![], keys: vec![] };
    for _ in 0..n {
        let k = rng.random_range(0..3);
        let z = if rng.random::<f64>() < e_of[k] { 1.0 } else { 0.0 };
        d.z.push(z);
        d.e.push(e_of[k]);
        d.y.push(z + k as f64 + rng.random::<f64>());
        d.keys.push(2 * k + z as usize);
    }
    d
}

fn estimator<'a>(d: &'a Data, c: f64) -> impl Fn(&[f64]) -> sharpbounds::Result<(f64, f64)> + Sync + 'a {
    move |w| {
        ipw_bounds_weighted(
            &d.z,
            &d.y,
            &d.e,
            &IpwSensitivity::CDependence(c),
            IpwEstimand::Ate,
            Conditioning::Cells(&d.keys),
            Some(w),
        )
        .map(|b| b.interval())
    }
}

#[test]
fn bootstrap_is_bit_identical_across_runs_and_threads() {
    let d = data(300);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| percentile_bootstrap(300, 80, 4, estimator(&d, 0.1)).unwrap())
    };
    let a = run(1);
    assert_eq!(a, run(1));
    assert_eq!(a, run(3));
}

#[test]
fn intervals_widen_with_the_band() {
    let d = data(300);
    let mut previous: Option<(f64, f64)> = None;
    for c in [0.0, 0.05, 0.1, 0.2] {
        let r = percentile_bootstrap(300, 60, 9, estimator(&d, c)).unwrap();
        assert!(r.set_ci.0 <= r.set_ci.1);
        if let Some(p) = previous {
            assert!(r.set_ci.0 <= p.0 && r.set_ci.1 >= p.1, "c = {c}");
        }
        previous = Some(r.set_ci);
    }
}

#[test]
fn shared_draws_match_separate_runs() {
    let d = data(200);
    let grid = [0.0, 0.1];
    let joint = percentile_bootstrap_multi(200, 40, 6, grid.len(), |w| {
        grid.iter().map(|&c| estimator(&d, c)(w)).collect()
    })
    .unwrap();
    for (k, &c) in grid.iter().enumerate() {
        assert_eq!(joint[k], percentile_bootstrap(200, 40, 6, estimator(&d, c)).unwrap());
    }
}
