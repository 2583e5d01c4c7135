//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Always exits 0 so that the workspace test run reports the lines without
//! aborting; set `ACCEPTANCE_STRICT=1` to turn any FAIL into a non-zero exit.

use std::f64::consts::PI;
use std::time::Instant;

use hangstring_core::analysis::{fft_peak_frequency, loglog_slope, observed_orders, zero_crossing_frequency};
use hangstring_core::bessel::{chain_frequency, chain_mode, chain_mode_grid};
use hangstring_core::bvp::{solve_phi, solve_sturm, SturmProblem};
use hangstring_core::compat::{check_compat, initial_jet_ls, initial_jet_string};
use hangstring_core::discmap::equivalence_ratio;
use hangstring_core::energy::{
    energy2, ibvp_estimate_input, physical_energy, string_estimate_input, trajectory_jets, verify_energy_estimate,
};
use hangstring_core::evolution::{epsilon_sweep, solve_ibvp, solve_ibvp_with, Coefficients, Field, SolveOptions};
use hangstring_core::family::Family;
use hangstring_core::mesh::{derivative, inner, integrate_weighted, make_mesh, GridFn};
use hangstring_core::norms::{apply_averaging, jet_norm, xnorm, ynorm, Jet};
use hangstring_core::string::{
    make_bent_background, make_straight_background, solve_linearized_direct, solve_linearized_picard, uniform_forcing,
    StringData,
};
use nalgebra::DMatrix;

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn l2(u: &GridFn) -> f64 {
    inner(u, u).sqrt()
}

fn eigenmode() -> Outcome {
    let start = Instant::now();
    let c = Coefficients::hanging_chain(1, 1.0);
    let w = chain_frequency(1.0);
    let m = make_mesh(512, 1.0).unwrap();
    let u0 = GridFn::from_scalar_fn(&m, chain_mode);
    let opts = SolveOptions {
        snapshot_every: 10,
        ..SolveOptions::default()
    };
    let tr = solve_ibvp_with(&c, &u0, &GridFn::zeros(&m, 1), 0.0, 60.0, 1e-3, &opts, None).unwrap();
    let proj: Vec<f64> = tr.snapshots.iter().map(|s| inner(s.u(), &u0)).collect();
    let zc = zero_crossing_frequency(&tr.times(), &proj).unwrap_or(f64::NAN);
    let fft = fft_peak_frequency(1e-2, &proj).unwrap_or(f64::NAN);
    let rel = (zc - w).abs() / w;
    let period = 2.0 * PI / w;
    let dt = 2.5e-4;
    let errs: Vec<f64> = [128, 256, 512]
        .iter()
        .map(|&n| {
            let m = make_mesh(n, 1.0).unwrap();
            let u0 = GridFn::from_scalar_fn(&m, chain_mode);
            let t_end = (period / dt).round() * dt;
            let tr = solve_ibvp(&c, &u0, &GridFn::zeros(&m, 1), 0.0, t_end, dt).unwrap();
            l2(&(tr.last().u() - &u0.scaled((w * tr.last().t).cos())))
        })
        .collect();
    let orders = observed_orders(&errs);
    let min_order = orders.iter().cloned().fold(f64::INFINITY, f64::min);
    let secs = start.elapsed().as_secs_f64();
    (
        rel <= 0.01 && min_order >= 1.8 && secs <= 60.0,
        format!(
            "freq {zc:.6} (fft {fft:.6}) vs {w:.6}, rel err {rel:.2e}; L2 errors {__errs}, orders {orders:.3?}; {secs:.1} s", __errs = sci(&errs)),
    )
}

fn conservation() -> Outcome {
    let m = make_mesh(256, 1.0).unwrap();
    let c = Coefficients::new(
        2,
        Field::steady(|s| DMatrix::from_row_slice(2, 2, &[s * (1.0 + s), 0.2 * s, 0.2 * s, 0.5 * s])),
    );
    let mut fam = Family::new(2024);
    let u0 = fam.smooth_vector(&m, 2, 6, true);
    let u1 = fam.smooth_vector(&m, 2, 6, true);
    let tr = solve_ibvp(&c, &u0, &u1, 0.0, 10.0, 1e-3).unwrap();
    let e0 = physical_energy(&tr.snapshots[0], &c);
    let drift = tr
        .snapshots
        .iter()
        .map(|s| (physical_energy(s, &c) - e0).abs() / e0)
        .fold(0.0, f64::max);
    // uniqueness in operational form: zero data and linearity of the solution map
    let z = GridFn::zeros(&m, 2);
    let zero = solve_ibvp(&c, &z, &z, 0.0, 1.0, 1e-3).unwrap();
    let zero_max = zero.snapshots.iter().map(|s| s.u().max_abs()).fold(0.0, f64::max);
    let v0 = fam.smooth_vector(&m, 2, 6, true);
    let v1 = fam.smooth_vector(&m, 2, 6, true);
    let (a, b) = (1.7, -0.6);
    let ta = solve_ibvp(&c, &u0, &u1, 0.0, 1.0, 1e-3).unwrap();
    let tb = solve_ibvp(&c, &v0, &v1, 0.0, 1.0, 1e-3).unwrap();
    let tc = solve_ibvp(
        &c,
        &GridFn::lin_comb(a, &u0, b, &v0),
        &GridFn::lin_comb(a, &u1, b, &v1),
        0.0,
        1.0,
        1e-3,
    )
    .unwrap();
    let mut lin: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for ((x, y), w) in ta.snapshots.iter().zip(&tb.snapshots).zip(&tc.snapshots) {
        let comb = GridFn::lin_comb(a, x.u(), b, y.u());
        lin = lin.max((w.u() - &comb).max_abs());
        scale = scale.max(w.u().max_abs());
    }
    let lin_rel = lin / scale;
    (
        drift <= 1e-8 && zero_max == 0.0 && lin_rel <= 1e-10,
        format!("energy drift {drift:.2e} over T=10; zero data max {zero_max:.1e}; linearity defect {lin_rel:.2e}"),
    )
}

fn dissipation() -> Outcome {
    let m = make_mesh(256, 1.0).unwrap();
    let c = Coefficients::hanging_chain(1, 1.0);
    let u0 = GridFn::from_scalar_fn(&m, chain_mode);
    let u1 = GridFn::from_scalar_fn(&m, |s| (1.0 - s) * (3.0 * s).sin());
    let mut ok = true;
    let mut parts = Vec::new();
    for eps in [0.1, 1.0] {
        let tr = solve_ibvp(&c, &u0, &u1, eps, 2.0, 1e-3).unwrap();
        let e: Vec<f64> = tr.snapshots.iter().map(|s| energy2(s, &c, 0.0).unwrap()).collect();
        let worst = e
            .windows(2)
            .map(|w| (w[1] - w[0]) / e[0])
            .fold(f64::NEG_INFINITY, f64::max);
        ok &= worst <= 1e-10;
        parts.push(format!(
            "eps={eps}: max relative step increase {worst:.2e}, E(T)/E(0) {:.4}",
            e.last().unwrap() / e[0]
        ));
    }
    (ok, parts.join("; "))
}

fn vanishing_viscosity() -> Outcome {
    let m = make_mesh(256, 1.0).unwrap();
    let c = Coefficients::hanging_chain(1, 1.0);
    let u0 = GridFn::from_scalar_fn(&m, chain_mode);
    let rep = epsilon_sweep(
        &c,
        &u0,
        &GridFn::zeros(&m, 1),
        &[0.1, 0.05, 0.025, 0.0125, 0.0],
        2.0,
        1e-3,
        &SolveOptions::default(),
    )
    .unwrap();
    let slope = rep.fitted_slope.unwrap_or(f64::NAN);
    let diffs: Vec<f64> = rep.differences.iter().map(|d| d.1).collect();
    (
        slope >= 0.9,
        format!("slope {slope:.3}, differences {__diffs}", __diffs = sci(&diffs)),
    )
}

fn picard() -> Outcome {
    let m = make_mesh(128, 1.0).unwrap();
    let g = [0.0, -1.0];
    let (t_end, dt) = (2.0, 2e-3);
    let gammas = [5.0, 10.0, 20.0, 40.0];
    let data = StringData::free(chain_mode_grid(&m, &[1.0, 0.0]), GridFn::zeros(&m, 2));
    let straight = make_straight_background(&g, &m, t_end, dt).unwrap();
    let direct = solve_linearized_direct(&straight, &data, t_end, dt, &SolveOptions::default()).unwrap();
    let mut rbar = Vec::new();
    for &gamma in &gammas {
        let p = solve_linearized_picard(&straight, &data, t_end, dt, gamma, 30, 1e-12).unwrap();
        rbar.push(p.picard.unwrap().mean_ratio);
    }
    let p20 = solve_linearized_picard(&straight, &data, t_end, dt, 20.0, 30, 1e-12).unwrap();
    let (ja, jb) = (trajectory_jets(&p20.y).unwrap(), trajectory_jets(&direct.y).unwrap());
    let gap = ja
        .iter()
        .zip(&jb)
        .map(|(a, b)| jet_norm(&a.difference(b).unwrap(), 2, 2).unwrap())
        .fold(0.0, f64::max);
    let slope = if rbar.iter().all(Option::is_some) {
        loglog_slope(&gammas, &rbar.iter().map(|r| r.unwrap()).collect::<Vec<_>>())
    } else {
        None
    };
    // same measurement on a bent steady configuration, where the tension
    // feedback does depend on the iterate
    let bent = make_bent_background(&g, &m, 0.3).unwrap();
    let bent_rbar: Vec<f64> = gammas
        .iter()
        .map(|&gamma| {
            solve_linearized_picard(&bent, &data, t_end, dt, gamma, 30, 1e-12)
                .ok()
                .and_then(|p| p.picard.unwrap().mean_ratio)
                .unwrap_or(f64::NAN)
        })
        .collect();
    let bent_slope = loglog_slope(&gammas, &bent_rbar);
    let pass = slope.is_some_and(|s| (-1.3..=-0.7).contains(&s)) && gap <= 1e-6;
    (
        pass,
        format!(
            "straight: rbar {rbar:?}, slope {slope:?}, Picard vs direct {gap:.2e}; bent (info): rbar {__bent_rbar}, slope {bent_slope:.3?}", __bent_rbar = sci(&bent_rbar)),
    )
}

fn bvp_exactness() -> Outcome {
    let mut lin_err: f64 = 0.0;
    let mut quad_err: f64 = 0.0;
    let mut errs = Vec::new();
    for &n in &[64, 128, 256, 512] {
        let m = make_mesh(n, 1.0).unwrap();
        let nu = solve_sturm(&SturmProblem::free(&m, 1.0)).unwrap();
        lin_err = lin_err.max((&nu - &GridFn::from_scalar_fn(&m, |s| s)).max_abs());
        let p = SturmProblem::new(GridFn::zeros(&m, 1), GridFn::from_scalar_fn(&m, |_| 1.0), 0.0);
        let e = (&solve_sturm(&p).unwrap() - &GridFn::from_scalar_fn(&m, |s| s - 0.5 * s * s)).max_abs();
        quad_err = quad_err.max(e * (n * n) as f64);
        // smooth manufactured solution sin(2s) with c = 1 + s
        let p = SturmProblem::new(
            GridFn::from_scalar_fn(&m, |s| 1.0 + s),
            GridFn::from_scalar_fn(&m, |s| (5.0 + s) * (2.0 * s).sin()),
            2.0 * 2f64.cos(),
        );
        errs.push((&solve_sturm(&p).unwrap() - &GridFn::from_scalar_fn(&m, |s| (2.0 * s).sin())).max_abs());
    }
    let orders = observed_orders(&errs);
    let min_order = orders.iter().cloned().fold(f64::INFINITY, f64::min);
    let m = make_mesh(256, 1.0).unwrap();
    let bg = make_straight_background(&[0.0, -1.0], &m, 1.0, 0.1).unwrap();
    let phi_err = (&solve_phi(&bg, 0.0).unwrap() - &GridFn::from_scalar_fn(&m, |s| s)).max_abs();
    (
        lin_err <= 1e-12 && quad_err <= 1.0 && min_order >= 1.9 && phi_err <= 1e-12,
        format!(
            "linear {lin_err:.1e}; quadratic max n^2 err {quad_err:.1e}; smooth errors {__errs}, orders {orders:.3?}; phi {phi_err:.1e}",
            __errs = sci(&errs)
        ),
    )
}

fn sturm_ratio() -> Outcome {
    let ratios = |n: usize| -> Vec<f64> {
        let m = make_mesh(n, 1.0).unwrap();
        let mut fam = Family::new(77);
        (0..100)
            .map(|_| {
                let c = fam.smooth_function(&m, 5, false).map(|v| 10.0 * v.abs());
                let h = fam.smooth_function(&m, 8, false).scaled(fam.uniform(0.1, 5.0));
                let a = fam.uniform(-2.0, 2.0);
                let nu = solve_sturm(&SturmProblem::new(c, h.clone(), a)).unwrap();
                let dnu = derivative(&nu, 1).unwrap();
                l2(&dnu) / (a.abs() + integrate_weighted(&h, 0.5, 1.0).unwrap())
            })
            .collect()
    };
    let (r1, r2) = (ratios(256), ratios(512));
    let max1 = r1.iter().cloned().fold(0.0, f64::max);
    let max2 = r2.iter().cloned().fold(0.0, f64::max);
    let change = (max2 / max1 - 1.0).abs();
    (
        max1.is_finite() && change <= 0.2,
        format!(
            "max ratio {max1:.4} (n=256), {max2:.4} (n=512), change {:.2}%",
            100.0 * change
        ),
    )
}

fn averaging() -> Outcome {
    let m = make_mesh(512, 1.0).unwrap();
    let mut fam = Family::new(31);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let u = fam.smooth_function(&m, 8, false);
        let mu = apply_averaging(&u).unwrap();
        for k in 0..=2 {
            worst = worst.max(xnorm(&mu, k).unwrap() / xnorm(&u, k).unwrap());
        }
    }
    let errs: Vec<f64> = [128, 256, 512]
        .iter()
        .map(|&n| {
            let m = make_mesh(n, 1.0).unwrap();
            let w = GridFn::from_scalar_fn(&m, |s| (2.0 * s).sin() + s * s * s - 0.5);
            let sw = GridFn::from_scalar_fn(&m, |s| s * (2.0 * (2.0 * s).cos() + 3.0 * s * s));
            let lhs = apply_averaging(&sw).unwrap();
            let rhs = &w - &apply_averaging(&w).unwrap();
            (&lhs - &rhs).max_abs()
        })
        .collect();
    let orders = observed_orders(&errs);
    let min_order = orders.iter().cloned().fold(f64::INFINITY, f64::min);
    (
        worst <= 2.1 && min_order >= 1.8,
        format!(
            "max ||Mu||/||u|| {worst:.4}; identity errors {__errs}, orders {orders:.3?}",
            __errs = sci(&errs)
        ),
    )
}

fn norm_identity_and_disc() -> Outcome {
    let m = make_mesh(256, 1.0).unwrap();
    let mut fam = Family::new(9);
    let mut ident: f64 = 0.0;
    for _ in 0..20 {
        let u = fam.smooth_vector(&m, 2, 8, false);
        let du = derivative(&u, 1).unwrap();
        for k in 0..=3 {
            let lhs = xnorm(&u, k + 1).unwrap().powi(2);
            let rhs = inner(&u, &u) + ynorm(&du, k).unwrap().powi(2);
            ident = ident.max((lhs - rhs).abs() / lhs);
        }
    }
    let interval = |n: usize| -> (f64, f64) {
        let m = make_mesh(n, 1.0).unwrap();
        let mut fns: Vec<GridFn> = vec![
            GridFn::from_scalar_fn(&m, |_| 1.0),
            GridFn::from_scalar_fn(&m, |s| s),
            GridFn::from_scalar_fn(&m, |s| s * s),
            GridFn::from_scalar_fn(&m, |s| (PI * s).sin()),
            GridFn::from_scalar_fn(&m, chain_mode),
        ];
        let mut fam = Family::new(5);
        fns.extend((0..50).map(|_| fam.smooth_function(&m, 8, false)));
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for u in &fns {
            for k in 0..=2 {
                let r = equivalence_ratio(u, k).unwrap();
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        (lo, hi)
    };
    let (a, b) = (interval(256), interval(512));
    let stable = (b.0 / a.0 - 1.0).abs() <= 0.1 && (b.1 / a.1 - 1.0).abs() <= 0.1;
    (
        ident <= 1e-8 && a.1 / a.0 <= 20.0 && b.1 / b.0 <= 20.0 && stable,
        format!(
            "identity defect {ident:.1e}; disc ratios [{:.4}, {:.4}] (n=256), [{:.4}, {:.4}] (n=512), C/c {:.2}",
            a.0,
            a.1,
            b.0,
            b.1,
            b.1 / b.0
        ),
    )
}

fn compatibility() -> Outcome {
    let c = Coefficients::hanging_chain(1, 1.0);
    let m = make_mesh(64, 1.0).unwrap();
    let z = GridFn::zeros(&m, 1);
    let zero_ls = initial_jet_ls(&z, &z, &c, 4, 1e-3)
        .unwrap()
        .entries()
        .iter()
        .all(|e| e.max_abs() == 0.0);
    let z2 = GridFn::zeros(&m, 2);
    let bg = make_straight_background(&[0.0, -1.0], &m, 1.0, 0.1).unwrap();
    let (y, nu) = initial_jet_string(&z2, &z2, None, None, &bg, 4, 1e-3).unwrap();
    let zero_string = y.entries().iter().chain(nu.entries()).all(|e| e.max_abs() == 0.0);
    let w2 = chain_frequency(1.0).powi(2);
    let mut bessel_scaled: f64 = 0.0;
    let mut compat_ok = true;
    for &n in &[128, 256, 512] {
        let m = make_mesh(n, 1.0).unwrap();
        let u0 = GridFn::from_scalar_fn(&m, chain_mode);
        let jet = initial_jet_ls(&u0, &GridFn::zeros(&m, 1), &c, 2, 1e-3).unwrap();
        bessel_scaled = bessel_scaled.max((jet.entry(2) - &u0.scaled(-w2)).max_abs() * (n * n) as f64);
        compat_ok &= check_compat(&jet, 2, 1e-6).unwrap().passed;
    }
    // consistency with the time stepper: d_t^2 u at t = 0 from the trajectory
    let mut consts = Vec::new();
    let mut gaps = Vec::new();
    for &n in &[128, 256, 512] {
        // dt shrinks with h^2 so neither term of the bound dominates
        let dt = 4.0 / (n * n) as f64;
        let m = make_mesh(n, 1.0).unwrap();
        let u0 = GridFn::from_scalar_fn(&m, |s| (1.0 - s) * (2.0 * s).cos());
        let u1 = GridFn::from_scalar_fn(&m, |s| (1.0 - s) * s);
        let jet = initial_jet_ls(&u0, &u1, &c, 2, 1e-3).unwrap();
        let tr = solve_ibvp(&c, &u0, &u1, 0.0, 10.0 * dt, dt).unwrap();
        let extracted: Jet = trajectory_jets(&tr).unwrap().swap_remove(0);
        let gap = l2(&(extracted.entry(2) - jet.entry(2)));
        gaps.push(gap);
        consts.push(gap / (dt + 1.0 / (n * n) as f64));
    }
    let cmax = consts.iter().cloned().fold(0.0, f64::max);
    let cmin = consts.iter().cloned().fold(f64::INFINITY, f64::min);
    let consistent = cmax <= 2.0 * cmin;
    (
        zero_ls && zero_string && bessel_scaled <= 1.0 && compat_ok && consistent,
        format!(
            "zero jets {}; Bessel n^2 err {bessel_scaled:.2e}, compat {compat_ok}; trajectory gaps {__gaps}, gap/(dt+1/n^2) {consts:.1?}",
            zero_ls && zero_string, __gaps = sci(&gaps)),
    )
}

pub const ENERGY_CAP: f64 = 50.0;

fn energy_estimate() -> Outcome {
    let c = Coefficients::hanging_chain(1, 1.0);
    let m = make_mesh(256, 1.0).unwrap();
    let u0 = GridFn::from_scalar_fn(&m, chain_mode);
    let u1 = GridFn::from_scalar_fn(&m, |s| 0.5 * (1.0 - s) * (2.0 * s).sin());
    let gammas = [1.0, 2.0, 4.0, 8.0, 16.0];
    let fit = |scale: f64| {
        let tr = solve_ibvp(&c, &u0.scaled(scale), &u1.scaled(scale), 0.0, 10.0, 2e-3).unwrap();
        verify_energy_estimate(&ibvp_estimate_input(&tr, &c, 0.0).unwrap(), &gammas, ENERGY_CAP).unwrap()
    };
    let rep = fit(1.0);
    let rescaled = fit(3.7);
    let invariance = (rep.constant_fit - rescaled.constant_fit).abs() / rep.constant_fit;
    let last = *rep.constants.last().unwrap();
    let g1 = rep.empirical_gamma1.unwrap_or(f64::NAN);
    let stable = rep
        .gamma_list
        .iter()
        .zip(&rep.constants)
        .filter(|(g, _)| **g >= g1)
        .all(|(_, c)| (c - last).abs() <= 0.1 * last);
    // the string estimate on a forced straight-background run
    let sm = make_mesh(128, 1.0).unwrap();
    let g = [0.0, -1.0];
    let bg = make_straight_background(&g, &sm, 4.0, 2e-3).unwrap();
    let mut data = StringData::free(chain_mode_grid(&sm, &[1.0, 0.0]), GridFn::zeros(&sm, 2));
    data.f = Some(uniform_forcing(vec![0.3, 0.2], |t| (1.5 * t).sin()));
    let st = solve_linearized_direct(&bg, &data, 4.0, 2e-3, &SolveOptions::default()).unwrap();
    let srep = verify_energy_estimate(&string_estimate_input(&st, &data).unwrap(), &gammas, ENERGY_CAP).unwrap();
    (
        rep.passed && stable && invariance <= 1e-10 && srep.passed,
        format!(
            "C(gamma) {:.4?}, gamma1 {g1}, C {:.4}, rescaling defect {invariance:.1e}; string C(gamma) {:.4?}, C {:.4}; cap {ENERGY_CAP}",
            rep.constants, rep.constant_fit, srep.constants, srep.constant_fit
        ),
    )
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("hanging-chain eigenmode", eigenmode),
        ("energy conservation", conservation),
        ("dissipation sign", dissipation),
        ("vanishing viscosity", vanishing_viscosity),
        ("successive approximation contraction", picard),
        ("two-point BVP exactness", bvp_exactness),
        ("tension ratio boundedness", sturm_ratio),
        ("averaging operator", averaging),
        ("norm identity and disc equivalence", norm_identity_and_disc),
        ("compatibility recurrences", compatibility),
        ("energy estimate", energy_estimate),
    ];
    let mut failures = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = run();
        if !ok {
            failures += 1;
        }
        println!(
            "criterion {:>2} {name}: {} ({detail}) [{:.1} s]",
            k + 1,
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} of {} criteria pass",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
