//! The time-domain kernel tables against a symbolic expansion of the
//! generating-function form.

mod support;

use camp_core::se::build_convolution_kernel;
use camp_core::taps::{taps_for_model, theta_schedule, TapSchedule};
use camp_core::{Series, SpectralModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::bivariate::*;

const ORDER: usize = 10;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

fn check(s: &TapSchedule, label: &str) {
    let k = ORDER;
    let kernel = build_convolution_kernel(s, k).unwrap();
    let (p, q, r, th) = (s.p.coeffs(), s.q.coeffs(), s.r.coeffs(), s.theta.coeffs());
    let f = f_pq_theta(k, p, q, r);
    let dk = d_coefficient(k, p, r);
    let sk = sigma_coefficient(k, q, th);
    let fg = Bi::in_u(k, q).mul(&Bi::in_w(k, q)).mul(&f_g_theta(k, s.g.coeffs(), th));
    for i in 0..=k {
        for j in 0..=k - i {
            assert!(close(kernel.d(i, j), f.c[i][j]), "{label} D[{i}][{j}]: {} vs {}", kernel.d(i, j), f.c[i][j]);
            assert!(close(kernel.dk(i, j), dk.c[i][j]), "{label} DK[{i}][{j}]");
            assert!(close(kernel.sk(i, j), sk.c[i][j]), "{label} SK[{i}][{j}]");
            assert!(close(fg.c[i][j], f.c[i][j]), "{label} Q(y)Q(z)F_G [{i}][{j}]: {} vs {}", fg.c[i][j], f.c[i][j]);
        }
    }
}

#[test]
fn kernel_matches_expansion_for_ensembles() {
    let h = 2 * ORDER + 1;
    for (label, model) in [
        ("iid", SpectralModel::iid_gaussian(0.5).unwrap()),
        ("row-orthogonal", SpectralModel::row_orthogonal(0.5).unwrap()),
        ("geometric-5", SpectralModel::geometric(5.0, 0.5).unwrap()),
        ("geometric-10", SpectralModel::geometric(10.0, 0.3).unwrap()),
    ] {
        for knob in [0.0, 1.0, -0.7] {
            let theta = theta_schedule(knob, 1.4e-3, 1.6e-4, h).unwrap();
            check(&taps_for_model(&model, &theta).unwrap(), label);
        }
    }
}

#[test]
fn kernel_matches_expansion_for_arbitrary_sequences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 2 * ORDER + 1;
    for _ in 0..5 {
        let mut draw = || {
            let mut v: Vec<f64> = (0..=h).map(|_| rng.random_range(-1.0..1.0)).collect();
            v[0] = 1.0;
            v
        };
        let (theta, p, q) = (draw(), draw(), draw());
        let s = TapSchedule::from_pq(Series::from_vec(theta), Series::from_vec(p), Series::from_vec(q)).unwrap();
        check(&s, "random");
    }
}

/// With `q = 1` the kernel reduces to the direct-`g` form.
#[test]
fn direct_form_reduction() {
    let model = SpectralModel::geometric(5.0, 0.5).unwrap();
    let theta = theta_schedule(2.0, 1.4e-3, 1.6e-4, 2 * ORDER + 1).unwrap();
    let pq = taps_for_model(&model, &theta).unwrap();
    let s = TapSchedule::from_g(theta.clone(), pq.g.clone()).unwrap();
    let kernel = build_convolution_kernel(&s, ORDER).unwrap();
    let g = |i: isize| if i < 0 { 0.0 } else { s.g.coeffs()[i as usize] };
    let t = |i: isize| if i < 0 { 0.0 } else { s.theta.coeffs()[i as usize] };
    for a in 0..=ORDER as isize {
        for b in 0..=(ORDER as isize - a) {
            let k0 = if a == 0 { 1.0 } else { 0.0 };
            let mut want = g(a + b) - g(a + b + 1);
            for s in 0..=b {
                want += (g(s - 1) - g(s)) * t(a + b - s + 1);
                want += (t(s) - t(s - 1)) * g(a + b - s + 1);
                want += g(s) * (t(a + b - s) - k0 * t(b - s));
                want -= t(s) * (g(a + b - s) - k0 * g(b - s));
            }
            assert!(close(kernel.d(a as usize, b as usize), want), "[{a}][{b}]");
        }
    }
}
