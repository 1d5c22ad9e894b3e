use wavegrad::baselines::{charfn_density, monte_carlo_density, GradientSamples, SampleSource};
use wavegrad::field::{read_field_csv, write_field_csv};
use wavegrad::harness::{halving, tau_sweep};
use wavegrad::wavefn::{choose_tau, DEFAULT_MARGIN};
use wavegrad::{catalog, power_spectrum_density, sample_field, BallRegion, BinGrid, GradientDensity, GridSpec};

fn in_pool<T: Send>(threads: usize, job: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(job)
}

#[test]
fn monte_carlo_ignores_thread_count() {
    let f = catalog("sinusoid2d").unwrap();
    let grid = BinGrid::cube(2, -1.3, 1.3, 33).unwrap();
    let run = || monte_carlo_density(&f, f.domain(), 300_000, &grid, 7).unwrap().values;
    assert_eq!(in_pool(1, run), in_pool(4, run));
}

#[test]
fn charfn_ignores_thread_count() {
    let f = catalog("cosine1d").unwrap();
    let field = sample_field(&f, f.domain(), &GridSpec::new(vec![2048]).unwrap()).unwrap();
    let data = (0..2048).flat_map(|k| f.grad(&field.point(k))).collect();
    let s = GradientSamples::new(1, data, SampleSource::Analytic).unwrap();
    let grid = BinGrid::cube(1, -1.3, 1.3, 130).unwrap();
    let run = || charfn_density(&s, 2.0 * std::f64::consts::PI, 130, &grid).unwrap().values;
    assert_eq!(in_pool(1, run), in_pool(3, run));
}

#[test]
fn sweeps_are_reproducible() {
    let f = catalog("quadratic1d").unwrap();
    let grid = GridSpec::new(vec![1 << 13]).unwrap();
    let region = BallRegion::new(vec![-0.4], 0.1).unwrap();
    let a = in_pool(1, || tau_sweep(&f, f.domain(), &grid, &halving(4e-3, 4), &region).unwrap());
    let b = in_pool(2, || tau_sweep(&f, f.domain(), &grid, &halving(4e-3, 4), &region).unwrap());
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.axis, b.axis);
}

#[test]
fn field_and_density_files_round_trip_through_the_estimator() {
    let f = catalog("doublewell1d").unwrap();
    let field = sample_field(&f, f.domain(), &GridSpec::new(vec![4096]).unwrap()).unwrap();
    let mut buf = Vec::new();
    write_field_csv(&mut buf, &field).unwrap();
    let back = read_field_csv(buf.as_slice()).unwrap();
    assert_eq!(back.values(), field.values());

    let tau = choose_tau(&back, f.grad_bound(), DEFAULT_MARGIN).unwrap();
    let density = power_spectrum_density(&back, tau).unwrap();
    let mut out = Vec::new();
    density.write_csv(&mut out).unwrap();
    let reread = GradientDensity::read_csv(out.as_slice()).unwrap();
    assert_eq!(reread.values, density.values);
    assert_eq!(reread.tau, density.tau);
    assert!(reread.grid.same_as(&density.grid));
}

#[test]
fn every_fixture_is_a_probability_density() {
    for name in wavegrad::field::CATALOG_NAMES {
        let f = catalog(name).unwrap();
        let n = [0, 2048, 96, 24][f.dim()];
        let field = sample_field(&f, f.domain(), &GridSpec::uniform(f.dim(), n).unwrap()).unwrap();
        let tau = choose_tau(&field, f.grad_bound(), DEFAULT_MARGIN).unwrap();
        let d = power_spectrum_density(&field, tau).unwrap();
        assert!(d.values.iter().all(|v| *v >= 0.0), "{name}");
        assert!((d.mass() - 1.0).abs() < 1e-12, "{name}");
        assert!((d.diagnostics.pre_norm_mass.unwrap() - 1.0).abs() < 1e-9, "{name}");
    }
}
