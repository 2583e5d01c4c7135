//! One function per experiment kind. Each returns the report body and the
//! summary metric; `run_config` writes the files.

use std::f64::consts::PI;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::sync::Arc;

use hangstring_core::analysis::{fft_peak_frequency, loglog_slope, observed_orders, zero_crossing_frequency};
use hangstring_core::bessel::{chain_frequency, chain_mode};
use hangstring_core::compat::{check_compat, initial_jet_ls};
use hangstring_core::discmap::equivalence_ratio;
use hangstring_core::energy::{
    ibvp_estimate_input, physical_energy, string_estimate_input, trajectory_jets, verify_energy_estimate,
};
use hangstring_core::evolution::{epsilon_sweep, solve_ibvp_with, Coefficients, SolveOptions};
use hangstring_core::family::Family;
use hangstring_core::mesh::{derivative, inner, make_mesh, GridFn, Mesh};
use hangstring_core::norms::{jet_norm, xnorm, ynorm};
use hangstring_core::string::{
    make_bent_background, make_straight_background, solve_linearized_direct, solve_linearized_picard, BackgroundState,
    StringData,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Generator, Kind, System};

pub type RunResult<T> = Result<T, String>;

pub struct Outcome {
    pub passed: bool,
    pub metric: String,
    pub body: Value,
}

#[derive(Serialize)]
struct Report<'a> {
    kind: &'a str,
    passed: bool,
    summary: &'a str,
    results: &'a Value,
    config: &'a ExperimentConfig,
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Runs the experiment and writes `<kind>.json` (plus a trajectory CSV for
/// the kinds that produce one) into `out`.
pub fn run_config(cfg: &ExperimentConfig, out: &Path) -> RunResult<Outcome> {
    std::fs::create_dir_all(out).map_err(|e| format!("{}: {e}", out.display()))?;
    let outcome = match cfg.kind {
        Kind::Eigenmode => eigenmode(cfg, out),
        Kind::EpsilonSweep => eps_sweep(cfg),
        Kind::Refinement => refinement(cfg),
        Kind::PicardGammaSweep => picard_sweep(cfg, out),
        Kind::CompatCheck => compat(cfg),
        Kind::NormEquivalence => norm_equivalence(cfg),
        Kind::EnergyVerify => energy_verify(cfg, out),
    }?;
    let summary = format!(
        "{}: {} ({})",
        cfg.kind.name(),
        if outcome.passed { "PASS" } else { "FAIL" },
        outcome.metric
    );
    let report = Report {
        kind: cfg.kind.name(),
        passed: outcome.passed,
        summary: &summary,
        results: &outcome.body,
        config: cfg,
    };
    let path = out.join(format!("{}.json", cfg.kind.name()));
    let text = serde_json::to_string_pretty(&report).map_err(err)?;
    std::fs::write(&path, text + "\n").map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(outcome)
}

fn csv_out(out: &Path, name: &str, write: impl FnOnce(BufWriter<File>) -> std::io::Result<()>) -> RunResult<()> {
    let path = out.join(name);
    let f = File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    write(BufWriter::new(f)).map_err(|e| format!("{}: {e}", path.display()))
}

fn mesh(cfg: &ExperimentConfig, n: usize) -> RunResult<Arc<Mesh>> {
    make_mesh(n, cfg.mesh.grading).map_err(err)
}

fn read_data_file(cfg: &ExperimentConfig, mesh: &Arc<Mesh>, comps: usize) -> RunResult<(GridFn, GridFn)> {
    let path = cfg.data.file.as_ref().expect("validated");
    let mut rd = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let header: Vec<String> = rd.headers().map_err(err)?.iter().map(str::to_string).collect();
    if header != ["s", "comp", "u0", "u1"] {
        return Err(format!(
            "{}: expected header s,comp,u0,u1, got {}",
            path.display(),
            header.join(",")
        ));
    }
    let n = mesh.n_cells();
    let mut u0 = GridFn::zeros(mesh, comps);
    let mut u1 = GridFn::zeros(mesh, comps);
    let mut seen = vec![false; n * comps];
    for row in rd.records() {
        let row = row.map_err(err)?;
        let num = |k: usize| {
            row[k]
                .trim()
                .parse::<f64>()
                .map_err(|e| format!("{}: {e}", path.display()))
        };
        let comp: usize = row[1].trim().parse().map_err(|e| format!("{}: {e}", path.display()))?;
        let s = num(0)?;
        let i = mesh
            .centers()
            .iter()
            .position(|c| (c - s).abs() <= 1e-9)
            .ok_or_else(|| {
                format!(
                    "{}: s = {s} is not a cell center of the configured mesh",
                    path.display()
                )
            })?;
        if comp >= comps {
            return Err(format!("{}: component {comp} out of range", path.display()));
        }
        u0.set(i, comp, num(2)?);
        u1.set(i, comp, num(3)?);
        seen[i * comps + comp] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(format!(
            "{}: data do not cover every cell and component",
            path.display()
        ));
    }
    Ok((u0, u1))
}

/// Initial displacement and velocity with `comps` components.
fn initial_data(cfg: &ExperimentConfig, mesh: &Arc<Mesh>, comps: usize) -> RunResult<(GridFn, GridFn)> {
    let d = &cfg.data;
    let file = if d.u0 == Generator::File || d.u1 == Generator::File {
        Some(read_data_file(cfg, mesh, comps)?)
    } else {
        None
    };
    let direction: Vec<f64> = if comps == 1 {
        vec![1.0]
    } else {
        d.direction.clone().unwrap_or_else(|| vec![1.0; comps])
    };
    let mut fam = Family::new(cfg.seed);
    let mut make = |gen: Generator, amp: f64, slot: usize| -> GridFn {
        match gen {
            Generator::Bessel => GridFn::from_profile(mesh, &direction, |s| amp * chain_mode(s)),
            Generator::Zero => GridFn::zeros(mesh, comps),
            Generator::Constant => GridFn::from_profile(mesh, &direction, |_| amp),
            Generator::Random => fam.smooth_vector(mesh, comps, d.modes, true).scaled(amp),
            Generator::File => {
                let f = file.as_ref().expect("read above");
                if slot == 0 {
                    f.0.clone()
                } else {
                    f.1.clone()
                }
            }
        }
    };
    let u0 = make(d.u0, d.amplitude, 0);
    let u1 = make(d.u1, d.velocity_amplitude, 1);
    Ok((u0, u1))
}

fn background(cfg: &ExperimentConfig, mesh: &Arc<Mesh>) -> RunResult<BackgroundState> {
    let g = &cfg.physics.g;
    let t = cfg.time();
    match cfg.physics.background.as_str() {
        "straight" => make_straight_background(g, mesh, t.t_end, t.dt).map_err(err),
        "bent" => make_bent_background(g, mesh, cfg.physics.bend.unwrap_or(0.3)).map_err(err),
        path => {
            let f = File::open(path).map_err(|e| format!("{path}: {e}"))?;
            BackgroundState::from_csv(f, g, mesh).map_err(err)
        }
    }
}

fn chain(cfg: &ExperimentConfig) -> Coefficients {
    Coefficients::hanging_chain(1, cfg.g_norm())
}

fn opts(cfg: &ExperimentConfig) -> SolveOptions {
    SolveOptions {
        snapshot_every: cfg.params.snapshot_every.unwrap_or(1),
        ..SolveOptions::default()
    }
}

fn eigenmode(cfg: &ExperimentConfig, out: &Path) -> RunResult<Outcome> {
    let m = mesh(cfg, cfg.mesh.n)?;
    let c = chain(cfg);
    let (u0, u1) = initial_data(cfg, &m, 1)?;
    let t = cfg.time();
    let eps = cfg.params.eps.unwrap_or(0.0);
    let tr = solve_ibvp_with(&c, &u0, &u1, eps, t.t_end, t.dt, &opts(cfg), None).map_err(err)?;
    let proj: Vec<f64> = tr.snapshots.iter().map(|s| inner(s.u(), &u0)).collect();
    let exact = chain_frequency(cfg.g_norm());
    let measured = zero_crossing_frequency(&tr.times(), &proj);
    let fft = fft_peak_frequency(tr.snapshot_dt(), &proj);
    let rel = measured.map(|w| (w - exact).abs() / exact);
    let e0 = physical_energy(&tr.snapshots[0], &c);
    let drift = tr
        .snapshots
        .iter()
        .map(|s| (physical_energy(s, &c) - e0).abs() / e0.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    csv_out(out, "trajectory.csv", |w| tr.write_csv(w))?;
    let tol = cfg.params.tolerance.unwrap();
    let passed = rel.is_some_and(|r| r <= tol);
    Ok(Outcome {
        passed,
        metric: match (measured, rel) {
            (Some(w), Some(r)) => format!("frequency {w:.6} vs {exact:.6}, rel err {r:.2e}"),
            _ => "no oscillation detected".into(),
        },
        body: json!({
            "measured_frequency": measured,
            "fft_frequency": fft,
            "exact_frequency": exact,
            "relative_error": rel,
            "tolerance": tol,
            "energy_drift": drift,
        }),
    })
}

fn refinement(cfg: &ExperimentConfig) -> RunResult<Outcome> {
    let c = chain(cfg);
    let w = chain_frequency(cfg.g_norm());
    let t = cfg.time();
    let ns = cfg.params.n_list.clone().unwrap();
    let errors: Vec<f64> = ns
        .par_iter()
        .map(|&n| -> RunResult<f64> {
            let m = mesh(cfg, n)?;
            let u0 = GridFn::from_scalar_fn(&m, chain_mode);
            let o = SolveOptions {
                snapshot_every: usize::MAX,
                ..SolveOptions::default()
            };
            let tr = solve_ibvp_with(&c, &u0, &GridFn::zeros(&m, 1), 0.0, t.t_end, t.dt, &o, None).map_err(err)?;
            let last = tr.last();
            let e = last.u() - &u0.scaled((w * last.t).cos());
            Ok(inner(&e, &e).sqrt())
        })
        .collect::<RunResult<_>>()?;
    let orders = observed_orders(&errors);
    let min_order = orders.iter().cloned().fold(f64::INFINITY, f64::min);
    let need = cfg.params.min_order.unwrap();
    Ok(Outcome {
        passed: min_order >= need,
        metric: format!("min order {min_order:.3}"),
        body: json!({ "n_list": ns, "l2_errors": errors, "orders": orders, "min_order": need, "period": 2.0 * PI / w }),
    })
}

fn eps_sweep(cfg: &ExperimentConfig) -> RunResult<Outcome> {
    let m = mesh(cfg, cfg.mesh.n)?;
    let (u0, u1) = initial_data(cfg, &m, 1)?;
    let t = cfg.time();
    let rep = epsilon_sweep(
        &chain(cfg),
        &u0,
        &u1,
        cfg.params.eps_list.as_ref().unwrap(),
        t.t_end,
        t.dt,
        &SolveOptions::default(),
    )
    .map_err(err)?;
    let need = cfg.params.min_slope.unwrap();
    let passed = rep.fitted_slope.is_some_and(|s| s >= need);
    Ok(Outcome {
        passed,
        metric: match rep.fitted_slope {
            Some(s) => format!("slope {s:.3}"),
            None => "slope undefined".into(),
        },
        body: json!({ "sweep": rep, "min_slope": need }),
    })
}

fn picard_sweep(cfg: &ExperimentConfig, out: &Path) -> RunResult<Outcome> {
    let m = mesh(cfg, cfg.mesh.n)?;
    let bg = background(cfg, &m)?;
    let (y0, y1) = initial_data(cfg, &m, bg.dim())?;
    let data = StringData::free(y0, y1);
    let t = cfg.time();
    let p = &cfg.params;
    let direct = solve_linearized_direct(&bg, &data, t.t_end, t.dt, &SolveOptions::default()).map_err(err)?;
    let reference = trajectory_jets(&direct.y).map_err(err)?;
    let gammas = p.gamma_list.clone().unwrap();
    let runs: Vec<(Value, Option<f64>, f64)> = gammas
        .par_iter()
        .map(|&gamma| -> RunResult<(Value, Option<f64>, f64)> {
            let run = solve_linearized_picard(
                &bg,
                &data,
                t.t_end,
                t.dt,
                gamma,
                p.max_iter.unwrap(),
                p.tolerance.unwrap(),
            )
            .map_err(err)?;
            let jets = trajectory_jets(&run.y).map_err(err)?;
            let mut gap: f64 = 0.0;
            for (a, b) in jets.iter().zip(&reference) {
                gap = gap.max(jet_norm(&a.difference(b).map_err(err)?, 2, 2).map_err(err)?);
            }
            let diag = run.picard.expect("picard run");
            let rbar = diag.mean_ratio;
            Ok((serde_json::to_value(&diag).map_err(err)?, rbar, gap))
        })
        .collect::<RunResult<_>>()?;
    let rbar: Vec<Option<f64>> = runs.iter().map(|r| r.1).collect();
    let gaps: Vec<f64> = runs.iter().map(|r| r.2).collect();
    let slope = if rbar.iter().all(Option::is_some) {
        loglog_slope(&gammas, &rbar.iter().map(|r| r.unwrap()).collect::<Vec<_>>())
    } else {
        None
    };
    let [lo, hi] = p.slope_range.unwrap();
    let max_gap = gaps.iter().cloned().fold(0.0, f64::max);
    let passed = slope.is_some_and(|s| (lo..=hi).contains(&s)) && max_gap <= p.match_tolerance.unwrap();
    let mut thinned = direct.clone();
    let every = p.snapshot_every.unwrap().max(1);
    thin_string(&mut thinned, every);
    csv_out(out, "trajectory.csv", |w| thinned.write_csv(w))?;
    Ok(Outcome {
        passed,
        metric: format!(
            "slope {}, max gap to direct {max_gap:.2e}",
            slope.map_or("undefined".into(), |s| format!("{s:.3}"))
        ),
        body: json!({
            "background": bg.kind(),
            "gamma_list": gammas,
            "mean_ratios": rbar,
            "slope": slope,
            "slope_range": [lo, hi],
            "gaps_to_direct": gaps,
            "iterations": runs.into_iter().map(|r| r.0).collect::<Vec<_>>(),
        }),
    })
}

fn thin_string(st: &mut hangstring_core::string::StringTrajectory, every: usize) {
    let keep = |k: usize, n: usize| k.is_multiple_of(every) || k + 1 == n;
    let n = st.y.snapshots.len();
    let mut k = 0;
    st.y.snapshots.retain(|_| {
        k += 1;
        keep(k - 1, n)
    });
    for series in [&mut st.nu, &mut st.nu_p, &mut st.nu_l] {
        let mut k = 0;
        series.retain(|_| {
            k += 1;
            keep(k - 1, n)
        });
    }
}

fn compat(cfg: &ExperimentConfig) -> RunResult<Outcome> {
    let m = mesh(cfg, cfg.mesh.n)?;
    let (u0, u1) = initial_data(cfg, &m, 1)?;
    let p = &cfg.params;
    let order = p.m.unwrap();
    let jet = initial_jet_ls(&u0, &u1, &chain(cfg), order, p.dt_coeff.unwrap()).map_err(err)?;
    let rep = check_compat(&jet, order, p.tolerance.unwrap()).map_err(err)?;
    let worst = rep.residuals.iter().cloned().fold(0.0, f64::max);
    Ok(Outcome {
        passed: rep.passed,
        metric: format!("max residual {worst:.3e}"),
        body: serde_json::to_value(&rep).map_err(err)?,
    })
}

fn ratio_interval(cfg: &ExperimentConfig, n: usize) -> RunResult<(f64, f64)> {
    let m = mesh(cfg, n)?;
    let mut fns: Vec<GridFn> = vec![
        GridFn::from_scalar_fn(&m, |_| 1.0),
        GridFn::from_scalar_fn(&m, |s| s),
        GridFn::from_scalar_fn(&m, |s| s * s),
        GridFn::from_scalar_fn(&m, |s| (PI * s).sin()),
        GridFn::from_scalar_fn(&m, chain_mode),
    ];
    let mut fam = Family::new(cfg.seed);
    fns.extend((0..cfg.params.draws.unwrap()).map(|_| fam.smooth_function(&m, cfg.data.modes, false)));
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for u in &fns {
        for k in 0..=2 {
            let r = equivalence_ratio(u, k).map_err(err)?;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    Ok((lo, hi))
}

fn norm_equivalence(cfg: &ExperimentConfig) -> RunResult<Outcome> {
    let n = cfg.mesh.n;
    let m = mesh(cfg, n)?;
    let mut fam = Family::new(cfg.seed);
    let mut identity: f64 = 0.0;
    for _ in 0..cfg.params.draws.unwrap() {
        let u = fam.smooth_function(&m, cfg.data.modes, false);
        let du = derivative(&u, 1).map_err(err)?;
        for k in 0..=3 {
            let lhs = xnorm(&u, k + 1).map_err(err)?.powi(2);
            let rhs = inner(&u, &u) + ynorm(&du, k).map_err(err)?.powi(2);
            identity = identity.max((lhs - rhs).abs() / lhs);
        }
    }
    let (a, b) = rayon::join(|| ratio_interval(cfg, n), || ratio_interval(cfg, 2 * n));
    let (a, b) = (a?, b?);
    let stab = cfg.params.stability.unwrap();
    let drift = (b.0 / a.0 - 1.0).abs().max((b.1 / a.1 - 1.0).abs());
    let spread = (a.1 / a.0).max(b.1 / b.0);
    let passed = identity <= 1e-8 && spread <= cfg.params.max_ratio.unwrap() && drift <= stab;
    Ok(Outcome {
        passed,
        metric: format!(
            "ratio interval [{:.4}, {:.4}], C/c {spread:.2}, change under doubling {drift:.2e}",
            b.0, b.1
        ),
        body: json!({
            "identity_defect": identity,
            "interval": [a.0, a.1],
            "interval_doubled": [b.0, b.1],
            "spread": spread,
            "change_under_doubling": drift,
        }),
    })
}

fn energy_verify(cfg: &ExperimentConfig, out: &Path) -> RunResult<Outcome> {
    let m = mesh(cfg, cfg.mesh.n)?;
    let t = cfg.time();
    let p = &cfg.params;
    let gammas = p.gamma_list.clone().unwrap();
    let cap = p.cap.unwrap();
    let rep = match p.system.unwrap() {
        System::Scalar => {
            let c = chain(cfg);
            let (u0, u1) = initial_data(cfg, &m, 1)?;
            let tr = solve_ibvp_with(&c, &u0, &u1, p.eps.unwrap(), t.t_end, t.dt, &opts(cfg), None).map_err(err)?;
            csv_out(out, "trajectory.csv", |w| tr.write_csv(w))?;
            let input = ibvp_estimate_input(&tr, &c, p.lambda.unwrap()).map_err(err)?;
            verify_energy_estimate(&input, &gammas, cap).map_err(err)?
        }
        System::String => {
            let bg = background(cfg, &m)?;
            let (y0, y1) = initial_data(cfg, &m, bg.dim())?;
            let data = StringData::free(y0, y1);
            let st = solve_linearized_direct(&bg, &data, t.t_end, t.dt, &opts(cfg)).map_err(err)?;
            csv_out(out, "trajectory.csv", |w| st.write_csv(w))?;
            let input = string_estimate_input(&st, &data).map_err(err)?;
            verify_energy_estimate(&input, &gammas, cap).map_err(err)?
        }
    };
    Ok(Outcome {
        passed: rep.passed,
        metric: format!("C {:.4} against cap {cap}", rep.constant_fit),
        body: serde_json::to_value(&rep).map_err(err)?,
    })
}
