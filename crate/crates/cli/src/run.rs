use std::collections::BTreeMap;
use std::path::Path;

use esmlab::bounds::{self, Kappas, SweepConfig, CHECKS};
use esmlab::cube::{CubeSubset, LinearOrder};
use esmlab::esm::{self, Deviation};
use esmlab::fiid::{self, derive_seed, parse_pattern, LocalRule};
use esmlab::groups::GroupSpec;
use esmlab::unimodular::{self, Conditioning, CylinderTable, TableJson};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::Value;

use crate::args::*;
use crate::error::CliError;
use crate::table::{round9, Cell, Output, Table};

/// Result of a subcommand; `failed` marks an invariant violation.
pub struct Outcome {
    pub output: Output,
    pub failed: bool,
}

impl Outcome {
    fn ok(t: Table) -> Self {
        Self { output: Output::Table(t), failed: false }
    }
}

pub fn run(cmd: &Command, seed: u64) -> Result<Outcome, CliError> {
    match cmd {
        Command::Esm(EsmCmd::Verify(a)) => esm_verify(a, seed),
        Command::Esm(EsmCmd::Dump(a)) => esm_dump(a, seed),
        Command::Esm(EsmCmd::Excess(a)) => esm_excess(a, seed),
        Command::Bounds(BoundsCmd::Sweep(a)) => bounds_sweep(a, seed),
        Command::Bounds(BoundsCmd::Rate(a)) => bounds_rate(a, seed),
        Command::Bounds(BoundsCmd::Proj(a)) => bounds_proj(a, seed),
        Command::Fiid(FiidCmd::Density(a)) => fiid_density(a, seed),
        Command::Fiid(FiidCmd::Cut(a)) => fiid_cut(a, seed),
        Command::Fiid(FiidCmd::Curve(a)) => fiid_curve(a, seed),
        Command::Urs(UrsCmd::Cylinders(a)) => urs_cylinders(a, seed),
        Command::Urs(UrsCmd::Distance(a)) => urs_distance(a),
        Command::Urs(UrsCmd::Mtp(a)) => urs_mtp(a),
        Command::Urs(UrsCmd::Limit(a)) => urs_limit(a, seed),
    }
}

fn esm_verify(a: &EsmVerify, seed: u64) -> Result<Outcome, CliError> {
    let mass = if a.exhaustive {
        esm::mass_sweep_exhaustive(a.n)?
    } else {
        esm::mass_sweep_random(a.n, a.samples, a.orders, derive_seed(seed, 0))?
    };
    let disjoint = esm::disjoint_sweep(a.n, a.pairs, derive_seed(seed, 1))?;
    let equi = esm::equivariance_sweep(a.n, a.triples, derive_seed(seed, 2))?;
    let checks: [(&str, Deviation, f64); 6] = [
        ("mass", mass.mass, a.tol),
        ("telescoping", mass.telescoping, a.tol),
        ("alternate_formula", mass.alternate, a.tol),
        ("order_independence", mass.order_spread, a.tol),
        ("disjoint_intersection", disjoint, 0.0),
        ("equivariance", equi, a.tol),
    ];
    let mut t = Table::new(&["check", "checked", "max_deviation", "tolerance", "ok"]);
    let mut failed = false;
    for (name, d, tol) in checks {
        let ok = d.max <= tol;
        failed |= !ok;
        t.push(vec![Cell::text(name), Cell::int(d.checked), Cell::float(d.max), Cell::float(tol), Cell::Bool(ok)]);
    }
    Ok(Outcome { output: Output::Table(t), failed })
}

fn esm_dump(a: &EsmDump, seed: u64) -> Result<Outcome, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    let u = match &a.set {
        Some(s) => CubeSubset::parse_line(s)?,
        None => CubeSubset::random_bernoulli(a.n, a.density, &mut rng)?,
    };
    let ord = match &a.order {
        Some(s) => LinearOrder::parse(s)?,
        None => esm::sample_uniform_order(u.n(), derive_seed(seed, 1))?,
    };
    let f = esm::esm_field(&u, &ord)?;
    let mut t = Table::new(&["w", "i", "height"]);
    for w in f.support() {
        for i in 0..f.n() {
            t.push(vec![Cell::text(format!("{w:x}")), Cell::int(i), Cell::float(f.height(w, i))]);
        }
    }
    Ok(Outcome::ok(t))
}

fn esm_excess(a: &EsmExcess, seed: u64) -> Result<Outcome, CliError> {
    let size = (a.density * (1u64 << a.n.min(63)) as f64).round() as usize;
    let rows: Vec<Result<[f64; 5], CliError>> = (0..a.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
            let u = CubeSubset::random_of_size(a.n, size, &mut rng)?;
            let v = u.thin(a.thin, &mut rng);
            let ord = esm::sample_uniform_order(a.n, derive_seed(derive_seed(seed, t as u64), 1))?;
            let mass_u = esm::field_mass(&esm::esm_field(&u, &ord)?);
            let excess = esm::union_excess(&u, &v, &ord)?;
            let rel = if mass_u > 0.0 { excess / mass_u } else { 0.0 };
            Ok([u.measure(), v.measure(), mass_u, excess, rel])
        })
        .collect();
    let mut t = Table::new(&["trial", "mu_u", "mu_v", "mass_u", "excess", "relative_excess"]);
    for (i, r) in rows.into_iter().enumerate() {
        let r = r?;
        let mut row = vec![Cell::int(i)];
        row.extend(r.iter().map(|&x| Cell::float(x)));
        t.push(row);
    }
    Ok(Outcome::ok(t))
}

fn bounds_sweep(a: &BoundsSweep, seed: u64) -> Result<Outcome, CliError> {
    if a.kappas.len() != 3 {
        return Err(CliError::Input(format!("--kappas needs three values, got {}", a.kappas.len())));
    }
    let cfg = SweepConfig { kappa: a.kappa, kappas: Kappas::new(a.kappas[0], a.kappas[1], a.kappas[2])? };
    let report = if a.n <= 4 && !a.random {
        bounds::exhaustive_sweep(a.n, a.max_u.unwrap_or(1 << a.n), a.all_orders, &cfg)?
    } else {
        bounds::random_sweep(a.n, a.triples, seed, &cfg)?
    };
    let mut t = Table::new(&["check", "triples", "checked", "skipped", "violated", "max_slack"]);
    for (name, tally) in CHECKS.iter().zip(&report.tallies) {
        t.push(vec![
            Cell::text(*name),
            Cell::int(report.triples),
            Cell::int(tally.checked),
            Cell::int(tally.skipped),
            Cell::int(tally.violated),
            tally.max_slack.map_or(Cell::text(""), Cell::float),
        ]);
    }
    let failed = report.total_violations() > 0 || report.tallies.iter().any(|t| !t.exercised());
    Ok(Outcome { output: Output::Table(t), failed })
}

/// `2^-4 … 2^-12`.
pub fn default_rate_densities() -> Vec<f64> {
    (4..=12).map(|k| 2f64.powi(-k)).collect()
}

fn bounds_rate(a: &BoundsRate, seed: u64) -> Result<Outcome, CliError> {
    let densities = if a.densities.is_empty() { default_rate_densities() } else { a.densities.clone() };
    let rt = bounds::excess_rate_experiment(a.n, &densities, a.trials, seed)?;
    let mut t = Table::new(&["mu", "excess_mean", "excess_sd", "bound"]);
    for r in &rt.rows {
        t.push(vec![Cell::float(r.mu), Cell::float(r.excess_mean), Cell::float(r.excess_sd), Cell::float(r.bound)]);
    }
    Ok(Outcome::ok(t))
}

fn bounds_proj(a: &BoundsProj, seed: u64) -> Result<Outcome, CliError> {
    let rows = bounds::proj_sweep(&a.dims, a.samples, seed)?;
    let mut t = Table::new(&["dim", "checked", "metric_violations", "norm_violations", "max_metric_ratio"]);
    let mut failed = false;
    for r in &rows {
        failed |= r.metric_violations + r.norm_violations > 0;
        t.push(vec![
            Cell::int(r.dim),
            Cell::int(r.checked),
            Cell::int(r.metric_violations),
            Cell::int(r.norm_violations),
            Cell::float(r.max_metric_ratio),
        ]);
    }
    Ok(Outcome { output: Output::Table(t), failed })
}

fn rule_of(a: &RuleArgs) -> Result<(GroupSpec, LocalRule), CliError> {
    let spec = GroupSpec::parse(&a.group)?;
    let rule = LocalRule::parse(spec, &a.rule)?;
    Ok((spec, rule))
}

fn fiid_density(a: &FiidDensity, seed: u64) -> Result<Outcome, CliError> {
    let (spec, rule) = rule_of(&a.rule)?;
    let d = fiid::density_estimate(spec, &rule, a.radius, a.samples, seed)?;
    let mut t = Table::new(&["p_hat", "ci95", "samples", "hits", "nominal"]);
    t.push(vec![
        Cell::float(d.p_hat),
        Cell::float(d.ci95),
        Cell::int(d.samples),
        Cell::int(d.hits),
        rule.nominal_density().map_or(Cell::text(""), Cell::float),
    ]);
    Ok(Outcome::ok(t))
}

fn fiid_cut(a: &FiidCut, seed: u64) -> Result<Outcome, CliError> {
    let (spec, rule) = rule_of(&a.rule)?;
    let window = fiid::Window::new(spec, a.radius)?;
    let cuts: Vec<Result<fiid::CutResult, esmlab::Error>> = (0..a.trials)
        .into_par_iter()
        .map(|t| {
            let s = derive_seed(seed, t as u64);
            let cfg = fiid::sample_on(&window, &rule, s)?;
            fiid::cut_random_carving(&cfg, a.k, derive_seed(s, 1))
        })
        .collect();
    let mut t = Table::new(&["trial", "members", "cut", "cut_fraction", "max_component"]);
    for (i, c) in cuts.into_iter().enumerate() {
        let c = c?;
        t.push(vec![
            Cell::int(i),
            Cell::int(c.window_members),
            Cell::int(c.window_cut),
            Cell::float(c.cut_fraction),
            Cell::int(c.max_component),
        ]);
    }
    Ok(Outcome::ok(t))
}

fn fiid_curve(a: &FiidCurve, seed: u64) -> Result<Outcome, CliError> {
    let (spec, rule) = rule_of(&a.rule)?;
    let rows = fiid::hyperfiniteness_curve(spec, &rule, &a.densities, a.k, a.radius, a.trials, seed)?;
    let mut t = Table::new(&[
        "density",
        "mean_cut_fraction",
        "pooled_cut_fraction",
        "mean_k_emp",
        "mean_members",
        "nonempty_trials",
    ]);
    for r in &rows {
        t.push(vec![
            Cell::float(r.density),
            Cell::float(r.mean_cut_fraction),
            Cell::float(r.pooled_cut_fraction),
            Cell::float(r.mean_k_emp),
            Cell::float(r.mean_members),
            Cell::int(r.nonempty_trials),
        ]);
    }
    Ok(Outcome::ok(t))
}

fn conditioning(c: CondArg) -> Conditioning {
    match c {
        CondArg::Rejection => Conditioning::Rejection,
        CondArg::Planted => Conditioning::Planted,
    }
}

/// Table JSON as a top-level document, with a CSV view of its entries.
fn table_output(table: &CylinderTable) -> Result<Output, CliError> {
    let mut tj = table.to_json();
    tj.acceptance = tj.acceptance.map(round9);
    for e in tj.entries.iter_mut() {
        e.p = round9(e.p);
    }
    let mut csv = Table::new(&["pattern", "p", "count"]);
    for e in &tj.entries {
        csv.push(vec![
            Cell::text(e.pattern.join(".")),
            Cell::float(e.p),
            e.count.map_or(Cell::text(""), Cell::int),
        ]);
    }
    let body = match serde_json::to_value(&tj)? {
        Value::Object(m) => m,
        _ => unreachable!("table JSON is an object"),
    };
    Ok(Output::Document { meta: BTreeMap::new(), body, csv })
}

fn urs_cylinders(a: &UrsCylinders, seed: u64) -> Result<Outcome, CliError> {
    let (_, rule) = rule_of(&a.rule)?;
    let table = unimodular::cylinder_probabilities(&rule, a.r, a.samples, seed, conditioning(a.conditioning))?;
    Ok(Outcome { output: table_output(&table)?, failed: false })
}

pub fn read_table(path: &Path) -> Result<CylinderTable, CliError> {
    let text = std::fs::read_to_string(path)?;
    let tj: TableJson = serde_json::from_str(&text)?;
    Ok(CylinderTable::from_json(&tj)?)
}

fn urs_distance(a: &UrsDistance) -> Result<Outcome, CliError> {
    let t1 = read_table(&a.a)?;
    let t2 = match (&a.b, &a.pattern) {
        (Some(p), None) => read_table(p)?,
        (None, Some(pat)) => {
            let spec = GroupSpec::parse(&t1.to_json().group)?;
            CylinderTable::exact(&unimodular::finite_urs(spec, &parse_pattern(&spec, pat)?)?, t1.radius())?
        }
        _ => return Err(CliError::Input("give exactly one of --b and --pattern".into())),
    };
    let d = unimodular::weak_star_distance(&t1, &t2)?;
    let mut t = Table::new(&["distance", "shared", "cross_status"]);
    t.push(vec![Cell::float(d.value), Cell::int(d.shared), Cell::Bool(d.cross_status)]);
    Ok(Outcome::ok(t))
}

fn urs_mtp(a: &UrsMtp) -> Result<Outcome, CliError> {
    let spec = GroupSpec::parse(&a.group)?;
    let s = unimodular::mtp_sweep(spec, a.r, a.max_size)?;
    let mut t = Table::new(&["function", "sets", "max_violation", "ok"]);
    for (name, v) in &s.per_function {
        t.push(vec![Cell::text(name.as_str()), Cell::int(s.sets), Cell::float(*v), Cell::Bool(*v <= a.tol)]);
    }
    Ok(Outcome { output: Output::Table(t), failed: s.max_violation > a.tol })
}

fn urs_limit(a: &UrsLimit, seed: u64) -> Result<Outcome, CliError> {
    let spec = GroupSpec::parse(&a.group)?;
    let pattern = parse_pattern(&spec, &a.pattern)?;
    let rep = unimodular::fiid_thinning_limit_check(
        spec,
        &pattern,
        &a.qs,
        a.r,
        a.samples,
        seed,
        conditioning(a.conditioning),
        a.threshold,
    )?;
    let mut t = Table::new(&["q", "distance", "shared", "acceptance", "accepted"]);
    for r in &rep.rows {
        t.push(vec![
            Cell::float(r.q),
            Cell::float(r.distance),
            Cell::int(r.shared),
            Cell::float(r.acceptance),
            Cell::int(r.accepted),
        ]);
    }
    Ok(Outcome { output: Output::Table(t), failed: !(rep.trend_ok && rep.final_ok) })
}
