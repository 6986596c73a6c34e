//! Acceptance criteria 1-12. One PASS/FAIL line each; nonzero exit on failure.

use std::path::Path;
use std::time::{Duration, Instant};

use blowuplab::cli::{cmd_verify, CommonArgs, VerifyArgs};
use blowuplab::coefficients::{assemble_rotated, default_radii, ellipticity_scan, spectrum_closed, DEFAULT_MARGIN, DEFAULT_SEED};
use blowuplab::estimates::measure;
use blowuplab::evolution::{
    blowup_metrics, parabolic_convergence, solve_cartesian_2d, solve_radial, spacetime_points, SelfSimilarSolution,
    SolverConfig, PARABOLIC_KAPPAS, PARABOLIC_ORDER_BOUND,
};
use blowuplab::liouville::{cutoff_energy_gap, liouville_witness, CUTOFF_RADII, CUTOFF_TOL, ROOT_MATCH_TOL};
use blowuplab::params::{ConstructionParams, Variant};
use blowuplab::profiles::{f0_jet, f0_quadrature, RadialProfiles};
use blowuplab::quasilinear::{consistency_check, consistency_radii, QuasilinearExample, DEFAULT_GAMMA_SAMPLES};
use blowuplab::report::log_grid;
use blowuplab::verify::{
    decay_audit, default_points, max_principle_probe, residual_convergence, StationarySystem, DEFAULT_STEPS,
    ORDER_BOUND, RESIDUAL_BOUND, SLOPE_TOL,
};
use blowuplab::jet::Jet;
use nalgebra::{DMatrix, SymmetricEigen};

type Outcome = Result<String, String>;

fn profiles(variant: Variant, r0: f64) -> RadialProfiles {
    RadialProfiles::new(&ConstructionParams::new(variant, r0).unwrap()).unwrap()
}

fn within_budget(elapsed: Duration, budget_s: f64) -> Result<(), String> {
    if elapsed.as_secs_f64() < budget_s {
        Ok(())
    } else {
        Err(format!("runtime {:.1}s over {budget_s}s", elapsed.as_secs_f64()))
    }
}

fn ensure(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn spread(v: &[f64]) -> f64 {
    let hi = v.iter().copied().fold(0.0, f64::max);
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    hi / lo
}

fn c1_closed_form_vs_quadrature() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for variant in [Variant::Bounded, Variant::Unbounded] {
        let p = ConstructionParams::new(variant, 100.0).unwrap();
        for r in log_grid(1e-3, 10.0 * p.r0, 1000) {
            let closed = f0_jet(Jet::variable(r), p.epsilon, p.series_switch_radius).value();
            let quad = f0_quadrature(r, p.epsilon, 1e-13).map_err(|e| e.to_string())?;
            worst = worst.max((closed / quad - 1.0).abs());
        }
    }
    within_budget(t.elapsed(), 5.0)?;
    ensure(worst <= 1e-10, format!("max relative gap {worst:.2e} (bound 1e-10), {:.2}s", t.elapsed().as_secs_f64()))
}

fn c2_deficit_support() -> Outcome {
    let t = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for variant in [Variant::Bounded, Variant::Unbounded] {
        let p = profiles(variant, 100.0);
        let (a, b) = p.deficit_support();
        let off = log_grid(1e-3, 1e3 * p.params.r0, 20_000)
            .into_iter()
            .filter(|r| *r < a || *r > b)
            .map(|r| p.deficit(r).abs())
            .fold(0.0, f64::max)
            .max(measure(&p).deficit_off_support);
        let scaled: Vec<f64> = [50.0, 100.0, 200.0].iter().map(|&r0| measure(&profiles(variant, r0)).deficit_scaled).collect();
        let s = spread(&scaled);
        ok &= off <= 1e-10 && s <= 10.0;
        lines.push(format!("{}: off-support {off:.1e}, scaled spread {s:.2}", variant.as_str()));
    }
    within_budget(t.elapsed(), 10.0)?;
    ensure(ok, lines.join("; "))
}

fn c3_ellipticity() -> Outcome {
    let t = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for variant in [Variant::Bounded, Variant::Unbounded] {
        let mut scaled = Vec::new();
        let mut lambda_min_100 = f64::NAN;
        for r0 in [50.0, 100.0, 200.0] {
            let p = profiles(variant, r0);
            let rep = ellipticity_scan(&p, &default_radii(r0), DEFAULT_MARGIN, DEFAULT_SEED, 8);
            scaled.push(rep.lambda_max_scaled);
            if r0 == 100.0 {
                lambda_min_100 = rep.lambda_min;
            }
        }
        let p = profiles(variant, 100.0);
        let mut gap: f64 = 0.0;
        for r in log_grid(1e-3, 1e3, 400).into_iter().chain(log_grid(100.0, 201.0, 400)) {
            let m = assemble_rotated(&p, r);
            let mut e: Vec<f64> =
                SymmetricEigen::new(DMatrix::from_fn(4, 4, |i, j| m[i][j])).eigenvalues.iter().copied().collect();
            e.sort_by(f64::total_cmp);
            let c = spectrum_closed(&p, r);
            gap = gap.max((0..4).map(|k| (e[k] - c[k]).abs()).fold(0.0, f64::max));
        }
        let s = spread(&scaled);
        ok &= lambda_min_100 >= DEFAULT_MARGIN && s <= 10.0 && gap <= 1e-10;
        lines.push(format!("{}: lambda_min {lambda_min_100:.3}, lambda_max spread {s:.2}, spectrum gap {gap:.1e}", variant.as_str()));
    }
    within_budget(t.elapsed(), 10.0)?;
    ensure(ok, lines.join("; "))
}

fn c4_residual() -> Outcome {
    let t = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for variant in [Variant::Bounded, Variant::Unbounded] {
        let p = profiles(variant, 100.0);
        let (radii, angles) = default_points(&p);
        let rep = residual_convergence(&StationarySystem::single(&p), &radii, &angles, &DEFAULT_STEPS)
            .map_err(|e| e.to_string())?;
        let finest = *rep.max_residual.last().unwrap();
        ok &= rep.order >= ORDER_BOUND && finest <= RESIDUAL_BOUND && radii.len() * angles.len() == 64 * 16;
        lines.push(format!("{}: order {:.3}, finest {finest:.1e}", variant.as_str(), rep.order));
    }
    within_budget(t.elapsed(), 60.0)?;
    ensure(ok, lines.join("; "))
}

fn c5_decay() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for variant in [Variant::Bounded, Variant::Unbounded] {
        let p = profiles(variant, 100.0);
        let d = decay_audit(&p);
        let g = (d.gradient_slope - (-1.0 - p.epsilon)).abs();
        let h = (d.drift_slope - (-2.0 - p.epsilon)).abs();
        ok &= g <= SLOPE_TOL && h <= SLOPE_TOL;
        lines.push(format!("{}: |DU| slope gap {g:.1e}, drift slope gap {h:.1e}", variant.as_str()));
    }
    ensure(ok, lines.join("; "))
}

fn c6_max_principle() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for r0 in [50.0, 100.0, 200.0] {
        let p = profiles(Variant::Bounded, r0);
        let m = max_principle_probe(&p).map_err(|e| e.to_string())?;
        ok &= m.r_star > r0 && m.r_star < 2.0 * r0 && m.deficit_at_root > 0.0;
        lines.push(format!("r0={r0}: r*={:.4}, E(r*)={:.2e}", m.r_star, m.deficit_at_root));
    }
    ensure(ok, lines.join("; "))
}

fn c7_quasilinear() -> Outcome {
    let t = Instant::now();
    let ex = QuasilinearExample::build(&ConstructionParams::quasilinear(100.0).unwrap(), DEFAULT_GAMMA_SAMPLES)
        .map_err(|e| e.to_string())?;
    let rep = consistency_check(&ex, &consistency_radii(100.0, 4096), 8, 10_000, DEFAULT_SEED);
    let s = rep.to_section();
    within_budget(t.elapsed(), 120.0)?;
    ensure(
        s.passed,
        format!(
            "gap {:.1e} (ratio {:.2}), round-trip ratio {:.2}, state lambda_min {:.3}, {:.1}s",
            rep.max_gap,
            rep.gap_ratio,
            rep.roundtrip_ratio,
            rep.state_lambda_min,
            t.elapsed().as_secs_f64()
        ),
    )
}

fn c8_parabolic() -> Outcome {
    let r0 = 50.0;
    let points = spacetime_points(1000, 5.0 * r0, DEFAULT_SEED);
    let linear = SelfSimilarSolution::linear(&ConstructionParams::bounded(r0).unwrap()).map_err(|e| e.to_string())?;
    let quasi = SelfSimilarSolution::quasilinear(&ConstructionParams::quasilinear(r0).unwrap(), DEFAULT_GAMMA_SAMPLES)
        .map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    let mut ok = true;
    for sol in [&linear, &quasi] {
        let rep = parabolic_convergence(sol, &points, &PARABOLIC_KAPPAS).map_err(|e| e.to_string())?;
        ok &= rep.order >= PARABOLIC_ORDER_BOUND;
        lines.push(format!("{}: order {:.3}, finest {:.1e}", rep.source, rep.order, rep.max_residual.last().unwrap()));
    }
    ensure(ok, lines.join("; "))
}

fn c9_solver() -> Outcome {
    let t = Instant::now();
    let bounded = SelfSimilarSolution::linear(&ConstructionParams::bounded(50.0).unwrap()).map_err(|e| e.to_string())?;
    let tr = solve_radial(&bounded, &SolverConfig::radial(-1.0, -1e-2, 4096)).map_err(|e| e.to_string())?;
    let fit = blowup_metrics(&tr).map_err(|e| e.to_string())?;
    let lip_gap = (fit.lipschitz.exponent + 0.5).abs();

    let unbounded =
        SelfSimilarSolution::linear(&ConstructionParams::unbounded(50.0).unwrap()).map_err(|e| e.to_string())?;
    let tu = solve_radial(&unbounded, &SolverConfig::radial(-1.0, -1e-7, 4096)).map_err(|e| e.to_string())?;
    let fu = blowup_metrics(&tu).map_err(|e| e.to_string())?;
    let sup_rel = (fu.sup.exponent / fu.sup.expected - 1.0).abs();
    within_budget(t.elapsed(), 600.0)?;
    ensure(
        tr.max_rel_error <= 1e-3 && lip_gap <= 0.05 && sup_rel <= 0.1,
        format!(
            "rel error {:.1e}, Lipschitz exponent {:.5} ± {:.1e}; unbounded sup exponent {:.4e} ± {:.1e} vs {:.4e} ({} window, rel gap {sup_rel:.1e})",
            tr.max_rel_error,
            fit.lipschitz.exponent,
            fit.lipschitz.ci95,
            fu.sup.exponent,
            fu.sup.ci95,
            fu.sup.expected,
            fu.sup.window
        ),
    )
}

fn c10_cross_validation() -> Outcome {
    let sol = SelfSimilarSolution::linear(&ConstructionParams::bounded(50.0).unwrap()).map_err(|e| e.to_string())?;
    let tr = solve_cartesian_2d(&sol, &SolverConfig::cart2d(-1.0, -0.1, 256)).map_err(|e| e.to_string())?;
    let cv = tr.cross_validation.ok_or("no cross-validation section")?;
    ensure(
        cv.agreement <= 2e-2 && cv.leakage <= 1e-3,
        format!("agreement {:.1e}, leakage {:.1e}, exact error {:.1e}", cv.agreement, cv.leakage, cv.exact_error),
    )
}

fn c11_liouville() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for r in CUTOFF_RADII {
        let g = cutoff_energy_gap(r).map_err(|e| e.to_string())?;
        ok &= g <= CUTOFF_TOL;
        lines.push(format!("R={r:.0e} gap {g:.1e}"));
    }
    for r0 in [50.0, 100.0, 200.0] {
        let w = liouville_witness(&ConstructionParams::bounded(r0).unwrap()).map_err(|e| e.to_string())?;
        let gap = w.root_gap.unwrap_or(f64::INFINITY);
        ok &= w.passed && gap <= ROOT_MATCH_TOL;
        lines.push(format!("r0={r0} witness {} root gap {gap:.1e}", if w.passed { "ok" } else { "failed" }));
    }
    ensure(ok, lines.join("; "))
}

fn strip_timestamps(v: &mut serde_json::Value) {
    if let Some(m) = v.get_mut("manifest").and_then(|m| m.as_object_mut()) {
        m.remove("started_unix");
        m.remove("finished_unix");
    }
}

fn read_json(path: &Path) -> Result<serde_json::Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn c12_determinism() -> Outcome {
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    for d in &dirs {
        let args = VerifyArgs {
            common: CommonArgs {
                variant: Variant::Bounded,
                r0: 100.0,
                out: d.path().to_path_buf(),
                seed: DEFAULT_SEED,
                quad_tol: 1e-12,
            },
            only: vec![],
        };
        cmd_verify(&args).map_err(|e| e.message)?;
    }
    let csv: Vec<Vec<u8>> = dirs
        .iter()
        .map(|d| std::fs::read(d.path().join("liouville_energy.csv")).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let mut same_json = true;
    for name in ["report.json", "manifest.json"] {
        let mut a = read_json(&dirs[0].path().join(name))?;
        let mut b = read_json(&dirs[1].path().join(name))?;
        strip_timestamps(&mut a);
        strip_timestamps(&mut b);
        if let (Some(a), Some(b)) = (a.as_object_mut(), b.as_object_mut()) {
            a.remove("started_unix");
            a.remove("finished_unix");
            b.remove("started_unix");
            b.remove("finished_unix");
        }
        same_json &= a == b;
    }
    ensure(csv[0] == csv[1] && same_json, format!("CSV identical {}, JSON identical {same_json}", csv[0] == csv[1]))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("closed form vs quadrature", c1_closed_form_vs_quadrature),
        ("deficit support", c2_deficit_support),
        ("ellipticity certification", c3_ellipticity),
        ("elliptic residual", c4_residual),
        ("decay audit", c5_decay),
        ("maximum-principle probe", c6_max_principle),
        ("quasilinear consistency", c7_quasilinear),
        ("parabolic verification", c8_parabolic),
        ("solver fidelity", c9_solver),
        ("2D cross-validation", c10_cross_validation),
        ("Liouville suite", c11_liouville),
        ("determinism", c12_determinism),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS {:>2} {name}: {msg} [{secs:.1}s]", k + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {msg} [{secs:.1}s]", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
