use atomnum_core::calib::{add_transmission_noise, fit_transient, heterodyne_transmission_sigma, time_grid};
use atomnum_core::homodyne::{demodulate, simulate_phase_stream, synthesize_trace};
use atomnum_core::physics::photon_flux;
use atomnum_core::{DetectionChain, HomodyneConfig, ProbeConfig, PumpTransient};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn probe() -> ProbeConfig {
    ProbeConfig { power_watts: 50e-12, ..ProbeConfig::default() }
}

fn homodyne(c: &mut Criterion) {
    let chain = DetectionChain::from_q(0.4).unwrap();
    let cfg = HomodyneConfig::default();
    let mut g = c.benchmark_group("homodyne");
    g.bench_function("synthesize_1ms", |b| b.iter(|| synthesize_trace(0.1, &probe(), &chain, &cfg, 1e-3, 3).unwrap()));
    let trace = synthesize_trace(0.1, &probe(), &chain, &cfg, 1e-3, 3).unwrap();
    g.bench_function("demodulate_1ms", |b| b.iter(|| demodulate(black_box(&trace), 312).unwrap()));
    g.bench_function("phase_stream_1000_windows", |b| {
        b.iter(|| simulate_phase_stream(0.1, &probe(), &chain, &cfg, 312, 1000, 3).unwrap())
    });
    g.finish();
}

fn transient_fit(c: &mut Criterion) {
    let flux = photon_flux(5e-12, ProbeConfig::default().wavelength_m);
    let clean = PumpTransient::model(1606.0, 0.0164, flux, 2.4, time_grid(400, 1e-6)).unwrap();
    let data = add_transmission_noise(&clean, 11, |t| heterodyne_transmission_sigma(t, 0.4, flux * 1e-6) / 200f64.sqrt());
    c.bench_function("calib/fit_transient_400", |b| b.iter(|| fit_transient(black_box(&data)).unwrap()));
}

criterion_group!(benches, homodyne, transient_fit);
criterion_main!(benches);
