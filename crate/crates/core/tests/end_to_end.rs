use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use uniband_core::{
    build_band, design_grid, plugin_extrema, BandRequest, Bandwidth, BootstrapConfig, GridRule, KernelId, MeshOutcome,
    Sample, Sequential,
};

fn normals(seed: u64, n: usize) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Sample::new((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).unwrap()
}

fn request(sample: Sample) -> BandRequest {
    let mut req = BandRequest::new(sample);
    req.region = Some((-1.0, 1.0));
    req.bootstrap = BootstrapConfig { draws: 1000, alpha: 0.05, master_seed: 11 };
    req
}

#[test]
fn mesh_rule_band_on_normal_data() {
    let band = build_band(&request(normals(1, 2000)), &Sequential).unwrap();
    let c = &band.constants;
    assert!(c.indicator_ok);
    assert_eq!(c.outcome, MeshOutcome::Solved);
    assert!((2..=1_000_000).contains(&band.grid.p()));
    assert!(0.5 * c.l_tilde * band.grid.max_gap <= c.r);
    assert_eq!(band.grid.points.first(), Some(&-1.0));
    assert_eq!(band.grid.points.last(), Some(&1.0));
    for j in 0..band.grid.p() {
        assert!(band.lower[j] < band.center[j] && band.center[j] < band.upper[j]);
        assert!((band.half_width[j] - band.c_hat * band.sigma_hat[j]).abs() < 1e-15);
    }
    // a sup over several points exceeds the pointwise normal quantile
    assert!(band.c_hat > 1.96);
}

#[test]
fn same_request_same_band() {
    let req = request(normals(2, 800));
    assert_eq!(build_band(&req, &Sequential).unwrap(), build_band(&req, &Sequential).unwrap());
}

#[test]
fn smaller_alpha_contains_larger_alpha() {
    let mut req = request(normals(3, 1000));
    let wide = build_band(&req, &Sequential).unwrap();
    req.bootstrap.alpha = 0.5;
    let narrow = build_band(&req, &Sequential).unwrap();
    assert_eq!(wide.grid, narrow.grid);
    for j in 0..wide.grid.p() {
        assert!(wide.lower[j] <= narrow.lower[j] && narrow.upper[j] <= wide.upper[j]);
    }
}

#[test]
fn other_rules_and_kernels() {
    let sample = normals(4, 1500);
    let mut req = request(sample);
    req.kernel = KernelId::Triweight;
    req.bandwidth = Bandwidth::Fixed(0.5);
    let band = build_band(&req, &Sequential).unwrap();
    assert_eq!(band.bandwidth, 0.5);
    assert!(band.constants.indicator_ok);

    req.rule = GridRule::Explicit { delta: 0.25 };
    let (grid, constants, _, _) = design_grid(&req).unwrap();
    assert_eq!(grid.p(), 9);
    assert_eq!(constants.outcome, MeshOutcome::External);

    // a mesh far too coarse is reported, not silently accepted
    req.kernel = KernelId::Gaussian;
    req.bandwidth = Bandwidth::Fixed(0.05);
    req.rule = GridRule::Explicit { delta: 1.0 };
    let (_, constants, _, warnings) = design_grid(&req).unwrap();
    assert!(!constants.indicator_ok);
    assert!(warnings.iter().any(|w| w.contains("mesh condition")));
}

#[test]
fn default_region_and_bandwidth() {
    let mut req = request(normals(5, 1000));
    req.region = None;
    let (grid, constants, h, _) = design_grid(&req).unwrap();
    assert!(grid.lower > -1.9 && grid.lower < -1.4);
    assert!(grid.upper > 1.4 && grid.upper < 1.9);
    assert_eq!(constants.bandwidth, h);
    assert!(h > 0.2 && h < 0.35);
}

#[test]
fn plugin_extrema_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let uniform = Sample::new((0..10_000).map(|_| rng.random::<f64>()).collect()).unwrap();
    let e = plugin_extrema(&uniform, 0.0, 1.0, None).unwrap();
    assert!((0.9..=1.3).contains(&e.f_max_hat), "{e:?}");
    assert!((0.7..=1.1).contains(&e.f_min_hat), "{e:?}");

    let normal = normals(7, 10_000);
    let e = plugin_extrema(&normal, -1.0, 1.0, None).unwrap();
    assert!((e.f_max_hat - 0.399).abs() < 0.05, "{e:?}");
    assert!((e.f_min_hat - 0.242).abs() < 0.05, "{e:?}");
    assert!((8..=256).contains(&e.bin_count));
}
