//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the summary is always printed. The
//! thresholds are restated here as literals and checked against the raw
//! measurements, independently of the `passed` flags of the drivers.

use hydrolimit::dynamics::SimParams;
use hydrolimit::harness::checks::{
    bilinear_check, bip_check, contraction_check, helmholtz_check, kernel_identity, mr_check, neumann_decay,
    resolvent_test, w_identity_check,
};
use hydrolimit::harness::{run_convergence_study, ExperimentReport, SimConfig};
use hydrolimit::C64;
use std::process::ExitCode;
use std::time::{Duration, Instant};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

/// Runs one criterion, adds its wall-clock budget to the verdict and prints
/// the summary line.
fn criterion(id: usize, name: &str, budget: Duration, f: impl FnOnce() -> hydrolimit::Result<Verdict>) -> bool {
    let start = Instant::now();
    let outcome = f();
    let elapsed = start.elapsed();
    let (passed, detail) = match outcome {
        Ok(v) => (v.passed && elapsed < budget, v.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    println!(
        "criterion {id:>2} {:<4} {name}: {detail} [{:.1}s of {}s]",
        if passed { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    passed
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn main() -> ExitCode {
    // `cargo test -- <filter>` passes arguments; only a bare run or a filter
    // matching this target executes the suite.
    if let Some(filter) = std::env::args().skip(1).find(|a| !a.starts_with('-')) {
        if !"acceptance".contains(filter.as_str()) {
            return ExitCode::SUCCESS;
        }
    }
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }

    let mut results = Vec::new();

    results.push(criterion(1, "kernel identity", secs(1), || {
        let r = kernel_identity(200, 7)?;
        Ok(verdict(r.samples == 200 && r.max_error <= 1e-12, format!("max error {:.2e} over {} samples", r.max_error, r.samples)))
    }));

    results.push(criterion(2, "resolvent cross-validation", secs(60), || {
        let lambdas = [C64::new(2.0, 1.0), C64::new(50.0, 0.0), C64::new(500.0, 0.0)];
        let r = resolvent_test(&lambdas, &[1.0, 0.3, 0.1, 0.03], 4, 32, 3)?;
        let ok = r.cases.len() == 12 && r.cases.iter().all(|c| c.oracle_gap <= 1e-6 && c.residual <= 1e-8);
        Ok(verdict(ok, format!("{} cases, max gap {:.2e}, max residual {:.2e}", r.cases.len(), r.max_gap, r.max_residual)))
    }));

    results.push(criterion(3, "Neumann-series decay", secs(10), || {
        let r = neumann_decay(&[1.0, 0.3, 0.1], &[1e2, 1e3, 1e4])?;
        let ok = r.slopes.len() == 3 && r.slopes.iter().all(|&(_, s)| (s + 0.5).abs() <= 0.1);
        let list: Vec<String> = r.slopes.iter().map(|(e, s)| format!("eps {e}: {s:.3}")).collect();
        Ok(verdict(ok, format!("slopes {}", list.join(", "))))
    }));

    results.push(criterion(4, "Helmholtz projection", secs(30), || {
        let r = helmholtz_check(50, &[1.0, 0.3, 0.1, 0.01], 4, 24, 11)?;
        let defects = r.rows.iter().all(|x| x.idempotence <= 1e-8 && x.divergence <= 1e-8 && x.normal_trace <= 1e-9);
        let worst = r.rows.iter().map(|x| x.idempotence.max(x.divergence)).fold(0.0, f64::max);
        let trace = r.rows.iter().map(|x| x.normal_trace).fold(0.0, f64::max);
        Ok(verdict(
            r.rows.len() == 4 && defects && r.proxy_variation <= 3.0,
            format!("worst defect {worst:.2e}, trace {trace:.2e}, proxy variation {:.3}", r.proxy_variation),
        ))
    }));

    results.push(criterion(5, "BIP epsilon-uniformity", secs(300), || {
        let s: Vec<f64> = (0..=20).map(|i| -5.0 + 0.5 * i as f64).collect();
        let r = bip_check(&[1.0, 0.5, 0.1, 0.01], &s, 4, 16, 4, 9)?;
        let c: Vec<f64> = r.scan.constants.iter().map(|x| x.1).collect();
        let spread = c.iter().copied().fold(0.0, f64::max) / c.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(verdict(
            c.len() == 4 && spread <= 4.0 && r.dense_gap <= 1e-5 && (r.scan.delta - 0.05).abs() < 1e-15,
            format!("C(eps) spread {spread:.3}, dense gap {:.2e}", r.dense_gap),
        ))
    }));

    results.push(criterion(6, "maximal-regularity ratio", secs(300), || {
        let r = mr_check(&[1.0, 0.5, 0.1, 0.01], 10, 0.5, 32, 4, 16, 1)?;
        let c: Vec<f64> = r.constants.iter().map(|x| x.1).collect();
        let variation = c.iter().copied().fold(0.0, f64::max) / c.iter().copied().fold(f64::INFINITY, f64::min);
        let samples = r.rows.len() / 4;
        Ok(verdict(c.len() == 4 && samples == 10 && variation <= 5.0, format!("variation {variation:.3} over {samples} forcings")))
    }));

    let cfg = SimConfig::default();
    let mut study: Option<ExperimentReport> = None;
    results.push(criterion(7, "hydrostatic-limit rate", secs(1800), || {
        let rep = run_convergence_study(&cfg)?;
        let complete = !rep.partial && rep.rows.len() == 4 && rep.rows.iter().all(|r| r.failure.is_none() && !r.excluded);
        let agree = rep.rows.iter().all(|r| match (r.e_e1, r.direct_e1, r.discretization_error) {
            (Some(a), Some(b), Some(d)) => (a - b).abs() <= 5.0 * d,
            _ => false,
        });
        let slope = rep.slope;
        let gaps: Vec<String> = rep
            .rows
            .iter()
            .map(|r| {
                format!(
                    "eps {}: E {:.3e} gap {:.1e} disc {:.1e}",
                    r.epsilon,
                    r.e_e1.unwrap_or(f64::NAN),
                    (r.e_e1.unwrap_or(f64::NAN) - r.direct_e1.unwrap_or(f64::NAN)).abs(),
                    r.discretization_error.unwrap_or(f64::NAN)
                )
            })
            .collect();
        study = Some(rep);
        Ok(verdict(
            complete && agree && slope.is_some_and(|s| s >= 0.9),
            format!("slope {:.3}; {}", slope.unwrap_or(f64::NAN), gaps.join("; ")),
        ))
    }));

    results.push(criterion(8, "w-equation identity", secs(120), || {
        let r = w_identity_check(&SimParams::default())?.report;
        Ok(verdict(
            r.residual <= 10.0 * r.time_error && r.i2_form_gap <= 1e-9,
            format!("residual {:.3e} vs time error {:.3e}, I2 form gap {:.2e}", r.residual, r.time_error, r.i2_form_gap),
        ))
    }));

    results.push(criterion(9, "Picard contraction", secs(600), || {
        let r = contraction_check(&cfg, 0.05, 2.0, study.as_ref())?;
        let ok = r.ratios.len() == 2
            && r.ratios.iter().all(|&(_, q)| q <= 0.9)
            && r.long_t == 2.0
            && r.long_subintervals >= 2
            && r.long_ratio <= 0.9;
        let list: Vec<String> = r.ratios.iter().map(|(e, q)| format!("eps {e}: {q:.3}")).collect();
        Ok(verdict(
            ok,
            format!("{}; T = 2: {} subintervals, ratio {:.3}", list.join(", "), r.long_subintervals, r.long_ratio),
        ))
    }));

    results.push(criterion(10, "bilinear-ratio stability", secs(120), || {
        let r = bilinear_check(8, 12, 12, 100, 2.0, 2.0, 42)?;
        let mut ok = r.coarse.len() == 2 && r.fine.len() == 2;
        let mut parts = Vec::new();
        for (c, f) in r.coarse.iter().zip(&r.fine) {
            let change = f.max_ratio / c.max_ratio - 1.0;
            ok &= c.samples == 100 && c.nh == 8 && f.nh == 12 && c.p == 2.0 && c.q == 2.0 && change.abs() <= 0.2;
            parts.push(format!("{:?}: {:.3e} -> {:.3e} ({:+.2e})", c.kind, c.max_ratio, f.max_ratio, change));
        }
        Ok(verdict(ok, parts.join(", ")))
    }));

    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
