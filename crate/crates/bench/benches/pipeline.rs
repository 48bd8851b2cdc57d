use criterion::{black_box, criterion_group, criterion_main, Criterion};
use wadc_bench::{recorded_windows, two_area};
use wadc_core::control::{design_wadc, DesignOptions};
use wadc_core::estimation::{run_identification, IdentificationConfig, RecordedSource};
use wadc_core::linalg::RealMatrix;

fn stages(c: &mut Criterion) {
    let truth = two_area();
    let windows = recorded_windows(0);
    let k0 = RealMatrix::zeros(truth.nv, truth.ng);
    let cfg = IdentificationConfig::default();
    let est = {
        let mut src = RecordedSource::new(windows.clone());
        run_identification(&mut src, &k0, truth.omega0, &cfg).unwrap().model
    };
    let opts = DesignOptions::default();

    c.bench_function("identify_from_recorded_windows", |b| {
        b.iter(|| {
            let mut src = RecordedSource::new(windows.clone());
            run_identification(&mut src, black_box(&k0), truth.omega0, &cfg)
        })
    });
    c.bench_function("design_on_estimated_model", |b| b.iter(|| design_wadc(black_box(&est.a), &est.b, &opts)));
}

criterion_group!(benches, stages);
criterion_main!(benches);
