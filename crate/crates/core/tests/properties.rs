use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use proptest::prelude::*;

use phasebench::config::{emit, parse_config};
use phasebench::model::{build_lattice, sech_pulse, LineshapeSpec, PulseSpec};
use phasebench::observables::{quadrature_forms, squeezing_table};
use phasebench::ppr::{build_noise_block, diffusion_matrix, outer_transpose, PprCell};
use phasebench::propagator::pulse_area;
use phasebench::stats::PowerSums;

fn complex() -> impl Strategy<Value = C64> {
    (-5.0..5.0f64, -5.0..5.0f64).prop_map(|(a, b)| C64::new(a, b))
}

fn cell() -> impl Strategy<Value = PprCell> {
    (complex(), complex(), complex(), complex())
        .prop_map(|(beta1, beta1_plus, beta2, beta2_plus)| PprCell { beta1, beta1_plus, beta2, beta2_plus })
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn power_sum_merge_is_associative(xs in prop::collection::vec(prop::array::uniform3(-10.0..10.0f64), 3..60),
                                       cut1 in 0usize..100, cut2 in 0usize..100) {
        let n = xs.len();
        let (i, j) = { let (a, b) = (cut1 % n, cut2 % n); (a.min(b), a.max(b)) };
        let part = |s: &[[f64; 3]]| { let mut p = PowerSums::new(3, 4); for x in s { p.push(x); } p };
        let (a, b, c) = (part(&xs[..i]), part(&xs[i..j]), part(&xs[j..]));
        let mut left = a.clone(); left.merge(&b); left.merge(&c);
        let mut bc = b.clone(); bc.merge(&c);
        let mut right = a.clone(); right.merge(&bc);
        let whole = part(&xs);
        prop_assert_eq!(left.count(), whole.count());
        for e in [[1u8, 0, 0], [0, 2, 0], [1, 1, 1], [0, 0, 4], [2, 0, 2]] {
            prop_assert!(close(left.raw_moment(&e), right.raw_moment(&e), 1e-9));
            prop_assert!(close(left.raw_moment(&e), whole.raw_moment(&e), 1e-9));
        }
    }

    #[test]
    fn noise_factorization_holds_in_every_gauge(c in cell(), g in 0.01..3.0f64, gamma in 0.0..2.0f64,
                                                 n_bar in 0.0..40.0f64, x in 0.05..20.0f64) {
        let d = diffusion_matrix(&c, g, gamma, n_bar);
        let bbt = outer_transpose(&build_noise_block(&c, g, gamma, n_bar).with_gauge(x).matrix());
        let scale = d.iter().flatten().map(|z| z.norm()).fold(1e-300, f64::max);
        for i in 0..6 {
            for j in 0..6 {
                prop_assert!((bbt[i][j] - d[i][j]).norm() <= 1e-12 * scale, "D[{}][{}]", i, j);
            }
        }
    }

    #[test]
    fn quadrature_is_pi_antiperiodic(theta in -10.0..10.0f64) {
        // X_{θ+π} = −X_θ, so S_θ is π-periodic
        let (cx, cy) = quadrature_forms(theta);
        let (dx, dy) = quadrature_forms(theta + PI);
        for k in 0..4 {
            prop_assert!((cx[k] + dx[k]).abs() < 1e-12 && (cy[k] + dy[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn sech_area_matches_request(area in 0.1..8.0f64, inverse_width in 1e10..1e13f64, g_phi in 1.0..1e6f64) {
        let pulse = PulseSpec::new(inverse_width, 0.0).with_area(area);
        let phys = phasebench::model::PhysicalConfig {
            g_phi, kappa: 0.0, n_bar: 0.0, rho_1d: 0.0, lineshape: LineshapeSpec::sharp(794e-9),
            pulse: pulse.clone(), z_max: 1e-3, v_g: 3e8,
        };
        let lat = build_lattice(&phys, 512, 2, 1).unwrap();
        let field = sech_pulse(&pulse, g_phi, &lat.tau).unwrap();
        // ±8/A window truncates the sech tails at the 1e-3 level
        prop_assert!(close(pulse_area(&field, g_phi, lat.d_tau()), area, 2e-3));
    }

    #[test]
    fn config_round_trips(g_phi in 1.0..1e6f64, rho in 0.0..1e8f64, kappa in 0.0..10.0f64, n_bar in 0.0..50.0f64,
                          n_out in 1usize..6, per in 1usize..5, seed in any::<u64>().prop_map(|s| s % (i64::MAX as u64)), traj in 2usize..10_000, any_seed in any::<u64>()) {
        let doc = format!(r#"
trajectories = {traj}
seed = {seed}
[physical]
g_phi = "{g_phi:e} s^-1/2"
rho_1d = "{rho:e} m^-1"
kappa = "{kappa:e} m^-1"
n_bar = {n_bar:e}
v_g = "3e8 m/s"
z_max = "1 mm"
[physical.lineshape]
kind = "sharp"
center_wavelength = "794 nm"
[physical.pulse]
duration = "1 ps"
[lattice]
n_tau = 32
n_z = {}
n_out = {n_out}
"#, n_out * per);
        let c = parse_config(&doc).unwrap();
        let text = emit(&c);
        prop_assert_eq!(parse_config(&text).unwrap(), c.clone(), "{}", text);
        // derived sweep seeds use the whole u64 range
        let mut wide = c;
        wide.seed = any_seed;
        prop_assert_eq!(parse_config(&emit(&wide)).unwrap(), wide);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    // averages do not depend on the diffusion gauge: two gauges agree within
    // their combined errors on a short optically thin run
    #[test]
    fn gauge_leaves_squeezing_unchanged(x in 0.3..3.0f64, seed in 0u64..1000) {
        use phasebench::model::{Method, PhysicalConfig};
        use phasebench::propagator::{SimOptions, Simulation, StepScheme};
        let a = 1e12;
        let phys = PhysicalConfig {
            g_phi: (a / 2e4f64).sqrt(), kappa: 0.0, n_bar: 0.0, rho_1d: 5e4, lineshape: LineshapeSpec::sharp(794e-9),
            pulse: PulseSpec::new(a, 0.0), z_max: 1e-3, v_g: 3e8,
        };
        let lat = build_lattice(&phys, 64, 8, 1).unwrap();
        let table = |gauge: f64| {
            let s = Simulation::new(phys.clone(), lat.clone(), StepScheme { z_substeps: 8, ..Default::default() },
                                    SimOptions { gauge, ..Default::default() }, seed).unwrap();
            squeezing_table(&phasebench::ensemble::run_ensemble(&s, Method::Ppr, 600, 1).unwrap(), 8).unwrap()
        };
        let (t1, tx) = (table(1.0), table(x));
        for (p, q) in t1.last().unwrap().per_theta.iter().zip(&tx.last().unwrap().per_theta) {
            let sig = (p.std_error.powi(2) + q.std_error.powi(2)).sqrt();
            prop_assert!((p.s - q.s).abs() <= 5.0 * sig + 1e-9, "θ={} {} vs {} ± {}", p.theta, p.s, q.s, sig);
        }
    }
}
