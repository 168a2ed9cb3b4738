//! Solver runs against closed-form solutions.

use pmdrift::drift::DriftSpec;
use pmdrift::measure::{mollify, InitialAtom, MeasureSpec};
use pmdrift::solver::{solve, SolverConfig};
use pmdrift::{Boundary, SpaceTimeDomain};

fn point_mass_run(m: f64, l: f64, t: f64, n: usize, boundary: Boundary) -> (SpaceTimeDomain, Vec<f64>, f64) {
    let domain = SpaceTimeDomain::new(2, l, t, n, boundary).unwrap();
    let spec =
        MeasureSpec { initial_atoms: vec![InitialAtom { x: vec![0.5 * l, 0.5 * l], mass: 1.0 }], ..Default::default() };
    // large level: the mollifier radius sits at its 2h floor
    let forcing = mollify(&spec, 1 << 20, &domain).unwrap();
    let drift = DriftSpec::zero().prepare(&domain).unwrap();
    let traj = solve(&SolverConfig::new(m, 0.0), &domain, &forcing, &drift, None, None).unwrap();
    let lost = 1.0 - domain.integrate(traj.final_slice());
    (domain, traj.final_slice().to_vec(), lost)
}

fn l1_error(domain: &SpaceTimeDomain, u: &[f64], exact: impl Fn(f64, f64) -> f64) -> f64 {
    let c = 0.5 * domain.length();
    let err: f64 = (0..domain.cell_count())
        .map(|k| {
            let x = domain.cell_center(k);
            (u[k] - exact(x[0] - c, x[1] - c)).abs()
        })
        .sum();
    err * domain.cell_volume()
}

fn heat_kernel(t: f64) -> impl Fn(f64, f64) -> f64 {
    move |x, y| (-(x * x + y * y) / (4.0 * t)).exp() / (4.0 * std::f64::consts::PI * t)
}

fn barenblatt_m2(t: f64) -> impl Fn(f64, f64) -> f64 {
    let c = 1.0 / (8.0 * std::f64::consts::PI).sqrt();
    move |x, y| (c - (x * x + y * y) / (16.0 * t.sqrt())).max(0.0) / t.sqrt()
}

#[test]
fn heat_kernel_error_decreases() {
    let mut errs = Vec::new();
    for n in [32, 64, 128] {
        let (d, u, lost) = point_mass_run(1.0, 2.4, 0.02, n, Boundary::DirichletZero);
        assert!(lost < 1e-6, "boundary loss {lost}");
        errs.push(l1_error(&d, &u, heat_kernel(0.02)));
    }
    println!("heat errors {errs:?}");
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    assert!(errs[2] < 1e-2, "{errs:?}");
}

#[test]
fn barenblatt_error_decreases() {
    let mut errs = Vec::new();
    for n in [64, 128] {
        let (d, u, _) = point_mass_run(2.0, 4.0, 0.5, n, Boundary::NoFlux);
        errs.push(l1_error(&d, &u, barenblatt_m2(0.5)));
    }
    println!("barenblatt errors {errs:?}");
    assert!(errs[0] / errs[1] >= 1.5, "{errs:?}");
    assert!(errs[1] < 5e-2, "{errs:?}");
}
