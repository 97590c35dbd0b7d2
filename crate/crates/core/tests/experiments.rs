use exclusim::config::parse_config;
use exclusim::experiments::{
    duality_experiment, hom_discrepancy, homogenization_experiment, hydro_experiment, hydro_target,
    martingale_bound, prof1_check, z_statistic,
};
use exclusim::harris::{sample_clocks, Occupancy};
use exclusim::pde::{closed_form_pairing, heat_solve, DensityProfile, InitialProfile};
use exclusim::{build_torus_1d, ConductanceField, FieldKind, Scaling, TestFunction};

fn cos1() -> TestFunction {
    TestFunction::CosineMode { k: vec![1] }
}

fn ring(n: usize, kind: FieldKind) -> exclusim::GraphInstance {
    let g = build_torus_1d(n, Scaling::Diffusive).unwrap();
    ConductanceField::new(kind, 7).assign(&g).unwrap()
}

#[test]
fn z_vanishes_on_empty_and_full_configurations() {
    let g = ring(
        16,
        FieldKind::Periodic {
            pattern: vec![1.0, 2.0],
        },
    );
    let log = sample_clocks(&g, 0.1, 3).unwrap();
    for eta in [Occupancy::empty(16), Occupancy::full(16)] {
        let z = z_statistic(&g, &cos1(), &eta, &log, 0.1, 1e-12).unwrap();
        assert!(z.abs() < 1e-9, "{z}");
    }
}

#[test]
fn bound_of_single_site_function() {
    let g = build_torus_1d(
        4,
        Scaling::Custom {
            mass: 4.0,
            time: 16.0,
        },
    )
    .unwrap();
    assert!((martingale_bound(&g, &[1.0, 0.0, 0.0, 0.0]) - 0.03125).abs() < 1e-15);
}

#[test]
fn duality_report_respects_bound() {
    let cfg = parse_config(
        "t = 0.05\nreplicas = 400\n[graph]\nn = [16, 32]\n[field]\nkind = \"iid_uniform\"\nlo = 1.0\nhi = 2.0\n",
    )
    .unwrap();
    let report = duality_experiment(&cfg).unwrap();
    assert_eq!(report.records.len(), 2);
    for r in &report.records {
        assert!(r.stat <= r.bound + 3.0 * r.se, "{r:?}");
    }
}

#[test]
fn discrepancy_vanishes_at_time_zero() {
    let g = ring(32, FieldKind::IidUniform { lo: 1.0, hi: 2.0 });
    assert!(hom_discrepancy(&g, &cos1(), 0.0, 1.3, 1e-12).unwrap() < 1e-12);
}

#[test]
fn constant_field_discrepancy_decays_quadratically() {
    let c = |n| {
        let g = ring(n, FieldKind::Constant { value: 1.0 });
        hom_discrepancy(&g, &cos1(), 0.1, 1.0, 1e-12).unwrap()
    };
    let (d128, d256) = (c(128), c(256));
    assert!(d256 <= 0.01);
    let ratio = d128 / d256;
    assert!((3.0..5.0).contains(&ratio), "{ratio}");
}

#[test]
fn harmonic_mean_beats_arithmetic_on_periodic_field() {
    let g = ring(
        128,
        FieldKind::Periodic {
            pattern: vec![1.0, 2.0],
        },
    );
    let h = hom_discrepancy(&g, &cos1(), 0.05, 4.0 / 3.0, 1e-12).unwrap();
    let a = hom_discrepancy(&g, &cos1(), 0.05, 1.5, 1e-12).unwrap();
    assert!(h < a, "{h} vs {a}");
}

#[test]
fn homogenization_report_passes_on_periodic_field() {
    let cfg = parse_config(
        "t = 0.05\n[graph]\nn = [32, 64, 128]\n[field]\nkind = \"periodic\"\npattern = [1.0, 2.0]\n",
    )
    .unwrap();
    let report = homogenization_experiment(&cfg).unwrap();
    assert!(
        report.all_passed(),
        "{:?}",
        report.failed_checks().collect::<Vec<_>>()
    );
}

#[test]
fn hydro_target_agrees_with_closed_form() {
    let rho0 = InitialProfile::Cosine {
        mean: 0.5,
        amplitude: 0.5,
        k: vec![1],
    };
    let target = hydro_target(&rho0, &cos1(), 1, 1.0, 0.01, 256, 256).unwrap();
    let closed = closed_form_pairing(&rho0, &cos1(), 1.0, 0.01).unwrap();
    assert!((target - closed).abs() < 1e-4, "{target} vs {closed}");
}

#[test]
fn full_occupation_never_deviates() {
    let cfg = parse_config(
        "t = 0.01\nreplicas = 20\n[initial_profile]\nkind = \"constant\"\nvalue = 1.0\n[graph]\nn = [16, 32]\n[field]\nkind = \"constant\"\nvalue = 1.0\n",
    )
    .unwrap();
    let report = hydro_experiment(&cfg).unwrap();
    assert!(report.records.iter().all(|r| r.stat == 0.0));
    assert!(
        report.all_passed(),
        "{:?}",
        report.failed_checks().collect::<Vec<_>>()
    );
}

#[test]
fn initial_measure_concentrates() {
    let rho0 = InitialProfile::Cosine {
        mean: 0.5,
        amplitude: 0.5,
        k: vec![1],
    };
    let g = ring(256, FieldKind::Constant { value: 1.0 });
    let psi = DensityProfile::from_fn(256, 1, |x| cos1().eval(x)).unwrap();
    let evolved = heat_solve(&psi, 1.0, 0.01, 64).unwrap();
    let freq = prof1_check(&g, &rho0, &evolved, 0.05, 100, 5).unwrap();
    assert!(freq <= 0.05, "{freq}");
}
