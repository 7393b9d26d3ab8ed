//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fail.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use esmlab::bounds::{self, SweepConfig, SweepReport, CHECKS};
use esmlab::esm;
use esmlab::fiid::{self, parse_pattern, LocalRule};
use esmlab::groups::GroupSpec;
use esmlab::unimodular::{self, Conditioning};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn mass_identity() -> Verdict {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let t = Instant::now();
    let r = pool.install(|| esm::mass_sweep_exhaustive(4)).unwrap();
    let el = t.elapsed();
    let pass = r.mass.checked == 65_536 * 24 && r.mass.max <= 1e-9 && el <= Duration::from_secs(60);
    verdict(pass, format!("{} fields, max |mass − h(μ)| = {:.3e}, {} single-threaded", r.mass.checked, r.mass.max, secs(el)))
}

fn disjointness() -> Verdict {
    let d = esm::disjoint_sweep(10, 1000, 2).unwrap();
    verdict(d.checked == 1000 && d.max == 0.0, format!("{} pairs at n=10, largest intersection mass {}", d.checked, d.max))
}

fn equivariance() -> Verdict {
    let d = esm::equivariance_sweep(8, 1000, 3).unwrap();
    verdict(d.checked == 1000 && d.max <= 1e-9, format!("{} triples at n ≤ 8, max deviation {:.3e}", d.checked, d.max))
}

fn additivity_trend() -> Verdict {
    let densities: Vec<f64> = (4..=12).map(|k| 2f64.powi(-k)).collect();
    let t = Instant::now();
    let r = bounds::excess_rate_experiment(16, &densities, 100, 4).unwrap();
    let el = t.elapsed();
    let means: Vec<f64> = r.rows.iter().map(|x| x.excess_mean).collect();
    let decreasing = means.windows(2).all(|w| w[1] < w[0]);
    let last = *means.last().unwrap();
    let pass = decreasing && last <= 0.5 && el <= Duration::from_secs(600);
    let shown: Vec<String> = means.iter().map(|m| format!("{m:.4}")).collect();
    verdict(
        pass,
        format!("means [{}], fitted C = {:.4}, {}", shown.join(", "), r.c_fit.unwrap_or(f64::NAN), secs(el)),
    )
}

fn check_summary(report: &SweepReport, names: &[&str]) -> (bool, String) {
    let mut ok = true;
    let mut worst = Vec::new();
    for &name in names {
        let t = report.get(name).unwrap();
        ok &= t.violated == 0 && t.exercised();
        if t.violated > 0 || !t.exercised() {
            worst.push(format!("{name}: {} violated, {} checked", t.violated, t.checked));
        }
    }
    (ok, worst.join("; "))
}

fn inequality_suite(exhaustive: &SweepReport) -> Verdict {
    let random = bounds::random_sweep(12, 10_000, 5, &SweepConfig::default()).unwrap();
    let (a, wa) = check_summary(exhaustive, &CHECKS);
    let (b, wb) = check_summary(&random, &CHECKS);
    let skipped: Vec<String> = CHECKS
        .iter()
        .zip(exhaustive.tallies.iter().zip(&random.tallies))
        .filter(|(_, (x, y))| x.skipped + y.skipped > 0)
        .map(|(n, (x, y))| {
            let s = x.skipped + y.skipped;
            format!("{n} {:.2}%", 100.0 * s as f64 / (s + x.checked + y.checked) as f64)
        })
        .collect();
    verdict(
        a && b,
        format!(
            "{} + {} triples, {} + {} violations; skipped: {}{}{}",
            exhaustive.triples,
            random.triples,
            exhaustive.total_violations(),
            random.total_violations(),
            skipped.join(", "),
            if wa.is_empty() { "" } else { "; " },
            wa + &wb
        ),
    )
}

fn s1_integral(exhaustive: &SweepReport) -> Verdict {
    let t = exhaustive.get("s1_integral").unwrap();
    let max = t.max_slack.unwrap_or(f64::INFINITY);
    verdict(t.violated == 0 && t.checked == exhaustive.triples && max <= 1e-9, format!("{} pairs, max deviation {max:.3e}", t.checked))
}

fn projective() -> Verdict {
    let rows = bounds::proj_sweep(&[2, 3, 4, 5, 6, 7, 8], 10_000, 7).unwrap();
    let checked: u64 = rows.iter().map(|r| r.checked).sum();
    let bad: u64 = rows.iter().map(|r| r.metric_violations + r.norm_violations).sum();
    let ratio = rows.iter().map(|r| r.max_metric_ratio).fold(0.0, f64::max);
    verdict(bad == 0, format!("{checked} pairs over dims 2–8, {bad} violations, largest d/max d_ij = {ratio:.3}"))
}

fn unimodularity() -> Verdict {
    let s = unimodular::mtp_sweep(GroupSpec::free(2).unwrap(), 2, 4).unwrap();
    verdict(s.max_violation <= 1e-12, format!("{} sets × {} functions, max violation {:.3e}", s.sets, s.per_function.len(), s.max_violation))
}

fn hyperfiniteness() -> Verdict {
    let f2 = GroupSpec::free(2).unwrap();
    let zoo = LocalRule::parse(f2, "zoo:q=1e-2,pat=ball2").unwrap();
    let rows = fiid::hyperfiniteness_curve(f2, &zoo, &[1e-2, 1e-3, 1e-4], 50, 8, 50, 9).unwrap();
    let cuts: Vec<f64> = rows.iter().map(|r| r.mean_cut_fraction).collect();
    let trend = cuts.windows(2).all(|w| w[1] < w[0]);

    let z = GroupSpec::free_abelian(1).unwrap();
    let full = LocalRule::bernoulli(z, 1.0).unwrap();
    let k = 50;
    let zrow = &fiid::hyperfiniteness_curve(z, &full, &[1.0], k, 1000, 50, 10).unwrap()[0];
    let target = 1.0 / (k + 1) as f64;
    let rel = (zrow.mean_cut_fraction / target - 1.0).abs();
    let shown: Vec<String> = cuts.iter().map(|c| format!("{c:.5}")).collect();
    verdict(
        trend && rel <= 0.05,
        format!(
            "free(2) zoo ball(2) cut fractions [{}] strictly decreasing: {trend}; Z full set at R=1000: {:.5} vs 1/{} ({:.2}% off)",
            shown.join(", "),
            zrow.mean_cut_fraction,
            k + 1,
            100.0 * rel
        ),
    )
}

fn thinning_limit() -> Verdict {
    let f2 = GroupSpec::free(2).unwrap();
    let pattern = parse_pattern(&f2, "ball1").unwrap();
    let t = Instant::now();
    let rep = unimodular::fiid_thinning_limit_check(
        f2,
        &pattern,
        &[1e-2, 1e-3, 1e-4],
        2,
        1_000_000,
        11,
        Conditioning::Planted,
        0.05,
    )
    .unwrap();
    let d: Vec<String> = rep.rows.iter().map(|r| format!("{:.4}", r.distance)).collect();
    verdict(
        rep.trend_ok && rep.final_ok,
        format!("distances [{}], {} inversions, {}", d.join(", "), rep.inversions, secs(t.elapsed())),
    )
}

fn run_cli(args: &[&str], threads: Option<&str>) -> (i32, Vec<u8>) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_esmlab"));
    cmd.args(args).env_remove("ESMLAB_THREADS");
    if let Some(t) = threads {
        cmd.args(["--threads", t]);
    }
    let out = cmd.output().unwrap();
    (out.status.code().unwrap_or(-1), out.stdout)
}

fn determinism(dir: &Path) -> Verdict {
    let table = dir.join("table.json");
    let table = table.to_str().unwrap();
    let (code, _) = run_cli(
        &["urs", "cylinders", "--rule", "zoo:q=1e-2,pat=ball1", "--samples", "2e4", "--seed", "3", "--format", "json", "--out", table],
        None,
    );
    assert_eq!(code, 0);
    let cases: Vec<Vec<&str>> = vec![
        vec!["esm", "verify", "--n", "6", "--samples", "50", "--pairs", "50", "--triples", "50"],
        vec!["esm", "dump", "--n", "5"],
        vec!["esm", "excess", "--n", "8", "--trials", "16"],
        vec!["bounds", "sweep", "--n", "8", "--triples", "200"],
        vec!["bounds", "sweep", "--n", "3"],
        vec!["bounds", "rate", "--n", "10", "--densities", "0.125,0.0625,0.03125", "--trials", "16"],
        vec!["bounds", "proj", "--samples", "300"],
        vec!["fiid", "density", "--rule", "bernoulli:p=0.3", "--samples", "5000"],
        vec!["fiid", "cut", "--rule", "bernoulli:p=0.4", "--radius", "5", "--k", "10", "--trials", "16"],
        vec!["fiid", "curve", "--rule", "zoo:q=1e-2,pat=ball2", "--densities", "0.05,0.01", "--radius", "6", "--trials", "16"],
        vec!["urs", "cylinders", "--rule", "zoo:q=1e-2,pat=ball1", "--samples", "2e4", "--format", "json"],
        vec!["urs", "distance", "--a", table, "--pattern", "ball1"],
        vec!["urs", "mtp", "--r", "1", "--max-size", "3"],
        vec!["urs", "limit", "--qs", "1e-2,1e-3", "--samples", "2e4"],
    ];
    let mut bad = Vec::new();
    for args in &cases {
        let a = run_cli(args, None);
        let b = run_cli(args, None);
        let c = run_cli(args, Some("8"));
        let d = run_cli(args, Some("1"));
        if a.0 != 0 || a.1.is_empty() || a != b || a != c || a != d {
            bad.push(format!("{} {} (exit {})", args[0], args[1], a.0));
        }
    }
    verdict(
        bad.is_empty(),
        if bad.is_empty() {
            format!("{} invocations byte-identical across runs and thread counts", cases.len())
        } else {
            format!("differing or failing: {}", bad.join(", "))
        },
    )
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let exhaustive = bounds::exhaustive_sweep(4, 16, false, &SweepConfig::default()).unwrap();
    let sweep_time = t.elapsed();
    type Criterion<'a> = (&'static str, Box<dyn FnOnce() -> Verdict + 'a>);
    let criteria: Vec<Criterion> = vec![
        ("mass identity", Box::new(mass_identity)),
        ("disjointness", Box::new(disjointness)),
        ("equivariance", Box::new(equivariance)),
        ("approximate additivity trend", Box::new(additivity_trend)),
        ("inequality suite", Box::new(|| inequality_suite(&exhaustive))),
        ("s1 integral identity", Box::new(|| s1_integral(&exhaustive))),
        ("projective metric sandwich", Box::new(projective)),
        ("unimodularity", Box::new(unimodularity)),
        ("hyperfiniteness trend", Box::new(hyperfiniteness)),
        ("thinning limit", Box::new(thinning_limit)),
        ("determinism", Box::new(|| determinism(dir.path()))),
    ];
    println!("exhaustive n=4 inequality sweep: {}", secs(sweep_time));
    let mut failed = 0;
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        let v = f();
        failed += usize::from(!v.pass);
        println!("criterion {:>2} {:<30} {}  {}", i + 1, name, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("{} of 11 criteria passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
