//! Acceptance checks, one line per criterion:
//!
//! 1. property suite
//! 2. simulator moments
//! 3. CIR error level at k = 250
//! 4. CIR drift error grows from k = 250 to k = 500
//! 5. exp-OU error level at k = 250, plus the model comparison report
//! 6. selected estimator close to the best single space
//!
//! Full-scale runs (T = 1000, 5e6 fine steps per path, R = 100) are part of
//! the default run. `STOVOL_WORKERS` caps the thread count.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use stovol::bases::{collection, design_matrix, BasisSpec, EstimationDomain, Family};
use stovol::harness::{run_replication, run_table, workers_from_env, ExperimentPlan, McReport, ModelSpec};
use stovol::lsq::{empirical_error, fit_nested, fit_prepared, PreparedSample};
use stovol::models::ModelId;
use stovol::quadvar::{quad_var, RegressionSample, Target};
use stovol::rng::{stream, Purpose};
use stovol::sampling::{generate_observations, simulate_integrated, IntegratedSeries};
use stovol::selection::{fit_collection, penalty, select_from_fits, PenaltyParams};

type Outcome = Result<String, String>;

const SEED: u64 = 20_260_418;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Solves `m x = b` by Gaussian elimination with partial pivoting.
fn gauss_solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, p);
        b.swap(col, p);
        let (top, rest) = m.split_at_mut(col + 1);
        let pivot = &top[col];
        for (r, row) in rest.iter_mut().enumerate() {
            let f = row[col] / pivot[col];
            for (x, p) in row[col..].iter_mut().zip(&pivot[col..]) {
                *x -= f * p;
            }
            b[col + 1 + r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / m[r][r];
    }
    x
}

fn unit_sample(us: Vec<f64>, ys: Vec<f64>) -> PreparedSample {
    let sample = RegressionSample {
        target: Target::DiffSq,
        xs: us,
        ys,
        block: 1.0,
        domain: None,
    };
    PreparedSample::new(&sample, EstimationDomain::new(0.0, 1.0).unwrap()).unwrap()
}

fn property_suite() -> Outcome {
    // Orthonormality: the 64-point rectangle rule is exact for trigonometric
    // polynomials of degree below 64, which covers products of frequencies <= 12.
    let spec = BasisSpec::Trig { m: 12 };
    let d = spec.dim();
    let n = 64;
    let rows: Vec<Vec<f64>> = (0..n).map(|i| spec.eval(i as f64 / n as f64)).collect();
    let mut gram_err = 0.0f64;
    for a in 0..d {
        for b in 0..d {
            let g: f64 = rows.iter().map(|r| r[a] * r[b]).sum::<f64>() / n as f64;
            gram_err = gram_err.max((g - f64::from(u8::from(a == b))).abs());
        }
    }
    if gram_err >= 1e-8 {
        return Err(format!("trig Gram error {gram_err:e} for D = {d}"));
    }

    // Least squares against the normal equations, and nesting monotonicity.
    let mut worst_rel = 0.0f64;
    for inst in 0..50u64 {
        let mut rng = stream(SEED, Purpose::Oracle, inst);
        let us: Vec<f64> = (0..80).map(|_| rng.random::<f64>()).collect();
        let ys: Vec<f64> = us.iter().map(|&u| (6.0 * u).sin() + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
        let spec = if inst % 2 == 0 {
            BasisSpec::Trig { m: (inst % 7) as usize + 1 }
        } else {
            BasisSpec::PiecewisePoly {
                depth: (inst % 3) as u32,
                degree: (inst % 4) as usize,
            }
        };
        let sample = unit_sample(us.clone(), ys.clone());
        let fit = fit_prepared(&sample, spec).map_err(|e| e.to_string())?;
        let a = design_matrix(&spec, &us).map_err(|e| e.to_string())?;
        let dim = spec.dim();
        let ata: Vec<Vec<f64>> = (0..dim).map(|i| (0..dim).map(|j| a.column(i).dot(&a.column(j))).collect()).collect();
        let aty: Vec<f64> = (0..dim).map(|i| a.column(i).iter().zip(&ys).map(|(p, y)| p * y).sum()).collect();
        let oracle = gauss_solve(ata, aty);
        let diff: f64 = fit.coeffs.iter().zip(&oracle).map(|(c, o)| (c - o).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = oracle.iter().map(|o| o * o).sum::<f64>().sqrt();
        worst_rel = worst_rel.max(diff / norm);

        let chain = collection(Family::Trig, 25, 0);
        let fits = fit_nested(&sample, &chain).map_err(|e| e.to_string())?;
        if fits.windows(2).any(|w| w[1].contrast > w[0].contrast) {
            return Err(format!("contrast increased along the trig chain in instance {inst}"));
        }

        // argmin of the criterion against direct enumeration
        let params = PenaltyParams::practical(Target::DiffSq, 0.09, sample.len(), 1.0);
        let all = fit_collection(&sample, &collection(Family::PiecewisePoly, 32, 3)).map_err(|e| e.to_string())?;
        let sel = select_from_fits(&all, &params).map_err(|e| e.to_string())?;
        let mut best = (f64::INFINITY, 0usize, 0usize);
        for (i, f) in all.iter().filter(|f| f.is_feasible()).enumerate() {
            let crit = f.contrast + penalty(&f.spec, &params);
            let key = (crit, f.spec.dim(), i);
            if key.0 < best.0 || (key.0 == best.0 && key.1 < best.1) {
                best = key;
            }
        }
        if sel.min_criterion() != best.0 {
            return Err(format!("selection disagrees with enumeration in instance {inst}"));
        }
    }
    if worst_rel >= 1e-8 {
        return Err(format!("normal equations relative gap {worst_rel:e}"));
    }

    // determinism
    let mut plan = ExperimentPlan::desk(ModelSpec::reference(ModelId::Cir), SEED);
    plan.replications = 2;
    let a = run_replication(&plan, 1).map_err(|e| e.to_string())?;
    let b = run_replication(&plan, 1).map_err(|e| e.to_string())?;
    check(
        a == b,
        format!("Gram err {gram_err:.1e}, normal equations rel gap {worst_rel:.1e}, monotone, argmin exact, deterministic"),
    )
}

fn simulator_moments() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (id, target) in [(ModelId::ExpOu, (0.75f64 * 0.75 / 4.0).exp()), (ModelId::Cir, 1.0 / 3.0)] {
        let spec = ModelSpec::reference(id);
        let model = spec.build().map_err(|e| e.to_string())?;
        // T = 1000 on a 1e-3 grid
        let (j, _) = simulate_integrated(&model, 1e-3, 1_000_000, 10, &mut stream(SEED, Purpose::Volatility, id as u64), false).map_err(|e| e.to_string())?;
        let avg = j.values.iter().sum::<f64>() / 1000.0;
        let rel = (avg / target - 1.0).abs();
        ok &= rel < 0.05;
        lines.push(format!("{id} time average {avg:.4} vs {target:.6} ({:.1}%)", 100.0 * rel));
    }

    // constant volatility v: k * qv / v is chi-squared with k degrees of freedom
    let (v, k, blocks, step) = (0.7, 50usize, 100_000usize, 1e-2);
    let j = IntegratedSeries {
        step,
        ratio: 1,
        values: vec![v * step; k * blocks],
    };
    let obs = generate_observations(&j, &mut stream(SEED, Purpose::Price, 0)).map_err(|e| e.to_string())?;
    let qv = quad_var(&obs, k).map_err(|e| e.to_string())?;
    let n = qv.len() as f64;
    let mean = qv.values.iter().sum::<f64>() / n;
    let var = qv.values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let law_var = 2.0 * v * v / k as f64;
    let se = (law_var / n).sqrt();
    let z = (mean - v) / se;
    let var_rel = (var / law_var - 1.0).abs();
    ok &= z.abs() < 3.0 && var_rel < 0.05;
    lines.push(format!("chi2 law: mean z = {z:.2}, variance off by {:.2}%", 100.0 * var_rel));
    check(ok, lines.join("; "))
}

struct Tables {
    table1: McReport,
    table2: McReport,
}

fn run_tables() -> Result<Tables, String> {
    let workers = workers_from_env();
    let t = Instant::now();
    let table1 = run_table(&ExperimentPlan::table1(SEED), workers).map_err(|e| e.to_string())?;
    eprintln!("table1 plan: {:.1?}", t.elapsed());
    let t = Instant::now();
    let table2 = McReport::merge(
        ExperimentPlan::table2(SEED)
            .into_iter()
            .map(|plan| run_table(&plan, workers))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?,
    );
    eprintln!("table2 plans: {:.1?}", t.elapsed());
    Ok(Tables { table1, table2 })
}

fn within(value: f64, reference: f64, factor: f64) -> bool {
    value > reference / factor && value < reference * factor
}

fn cir_level(tables: &Tables) -> Outcome {
    let c = tables.table1.cell(ModelId::Cir, Family::Trig, 250).ok_or("missing k = 250 cell")?;
    let (b, s) = (c.drift.mean, c.diffusion.mean);
    let mean20 = |v: &[f64]| v[..20].iter().sum::<f64>() / 20.0;
    let (b20, s20) = (mean20(&c.drift.values), mean20(&c.diffusion.values));
    let ok = within(b, 1.95e-3, 3.0) && within(s, 8.77e-5, 3.0) && within(b20, 1.95e-3, 5.0) && within(s20, 8.77e-5, 5.0);
    check(
        ok && c.replications == 100,
        format!(
            "R=100: b {b:.3e} (ref 1.95e-3), sigma2 {s:.3e} (ref 8.77e-5); first 20: b {b20:.3e}, sigma2 {s20:.3e}; failures {}",
            c.failures
        ),
    )
}

fn cir_ordering(tables: &Tables) -> Outcome {
    let row: Vec<String> = tables
        .table1
        .cells
        .iter()
        .map(|c| format!("k={} b {:.3e} sigma2 {:.3e}", c.k, c.drift.mean, c.diffusion.mean))
        .collect();
    eprintln!("  CIR trig by k: {}", row.join(", "));
    let b = |k| tables.table1.cell(ModelId::Cir, Family::Trig, k).map(|c| c.drift.mean).ok_or(format!("missing k = {k}"));
    let (b250, b500) = (b(250)?, b(500)?);
    check(b250 < b500, format!("b error k=250 {b250:.3e} < k=500 {b500:.3e}"))
}

fn exp_ou_level(tables: &Tables) -> Outcome {
    let reference = [
        (ModelId::ExpOu, Family::Trig, 4.08e-2, 1.42e-1),
        (ModelId::TanhOuShift, Family::Trig, 7.51e-2, 1.89e-2),
        (ModelId::ExpTanhOu, Family::Trig, 7.05e-2, 8.32e-2),
        (ModelId::Cir, Family::Trig, 1.95e-3, 8.77e-5),
        (ModelId::Cir, Family::PiecewisePoly, 1.04e-3, 4.61e-5),
    ];
    for (id, fam, rb, rs) in reference {
        if let Some(c) = tables.table2.cell(id, fam, 250) {
            eprintln!(
                "  {id} [{fam}]: b {:.3e} (ref {rb:.2e}), sigma2 {:.3e} (ref {rs:.2e}), failures {}",
                c.drift.mean, c.diffusion.mean, c.failures
            );
        }
    }
    let c = tables.table2.cell(ModelId::ExpOu, Family::Trig, 250).ok_or("missing exp-ou cell")?;
    let (b, s) = (c.drift.mean, c.diffusion.mean);
    check(
        within(b, 4.08e-2, 3.0) && within(s, 1.42e-1, 3.0),
        format!("exp-ou b {b:.3e} (ref 4.08e-2), sigma2 {s:.3e} (ref 1.42e-1)"),
    )
}

fn oracle_recovery() -> Outcome {
    let truth = |u: f64| {
        let phi = BasisSpec::Trig { m: 2 }.eval(u);
        1.0 + 0.6 * phi[1] - 0.4 * phi[2] + 0.3 * phi[3] + 0.2 * phi[4]
    };
    let noise = 0.1;
    let specs = collection(Family::Trig, 25, 0);
    let mut hits = 0;
    let mut worst = 0.0f64;
    for trial in 0..100u64 {
        let mut rng = stream(SEED ^ 0x6f72, Purpose::Oracle, trial);
        let us: Vec<f64> = (0..400).map(|_| rng.random::<f64>()).collect();
        let ys: Vec<f64> = us.iter().map(|&u| truth(u) + noise * rng.sample::<f64, _>(StandardNormal)).collect();
        let sample = unit_sample(us.clone(), ys);
        let fits = fit_collection(&sample, &specs).map_err(|e| e.to_string())?;
        let params = PenaltyParams::practical(Target::DiffSq, noise * noise, sample.len(), 1.0);
        let sel = select_from_fits(&fits, &params).map_err(|e| e.to_string())?;
        let err = |f| empirical_error(f, truth, &us).map(|e| e.value).map_err(|e| e.to_string());
        let chosen = err(&sel.fit)?;
        let mut best = f64::INFINITY;
        for f in fits.iter().filter(|f| f.is_feasible()) {
            best = best.min(err(f)?);
        }
        let ratio = chosen / best;
        worst = worst.max(ratio);
        hits += usize::from(ratio <= 2.0);
    }
    check(hits >= 90, format!("{hits}/100 trials within 2x of the best space (worst ratio {worst:.2})"))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: u32, name: &str, started: Instant, outcome: Outcome| {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] criterion {n} {name}: {detail} ({:.1?})", started.elapsed());
    };

    let t = Instant::now();
    report(1, "property suite", t, property_suite());
    let t = Instant::now();
    report(2, "simulator moments", t, simulator_moments());

    let t = Instant::now();
    match run_tables() {
        Ok(tables) => {
            report(3, "CIR error level", t, cir_level(&tables));
            let t = Instant::now();
            report(4, "CIR ordering in k", t, cir_ordering(&tables));
            let t = Instant::now();
            report(5, "exp-OU error level", t, exp_ou_level(&tables));
        }
        Err(e) => {
            for (n, name) in [(3, "CIR error level"), (4, "CIR ordering in k"), (5, "exp-OU error level")] {
                report(n, name, t, Err(format!("tables failed: {e}")));
            }
        }
    }
    let t = Instant::now();
    report(6, "oracle recovery", t, oracle_recovery());

    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
