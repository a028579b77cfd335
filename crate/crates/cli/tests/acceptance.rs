//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p diiv-cli --test acceptance`.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use diiv_core::estimand::{aligned_cells, diiv_from_cells, diiv_from_table, edge_contrasts, pool_and_flip};
use diiv_core::microsim::{
    analytic_shares, normal_cdf, run_monte_carlo, EnvironmentConfig, MonteCarloSummary, Preset, TypeProfile,
};
use diiv_core::synthetic::{balanced_parallel_table, joint_table, DeterministicPopulation};
use diiv_core::twostage::{intercept, ols_fit, two_stage_joint, two_stage_parallel, CrossTerm, DesignMatrix, SeKind};
use diiv_core::{DesignMode, DiivError, DirectedDesign, Instrument, ObservationTable, Sign};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TAU_C: f64 = 3.0;
const TAU_F: f64 = 2.0;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Reference shares to three decimals and lambda.
fn analytic_share_reproduction() -> Verdict {
    let reference = [
        (Preset::EnvA, [0.137, 0.039, 0.016, 0.039], 0.805),
        (Preset::EnvB, [0.039, 0.016, 0.039, 0.137], 0.195),
        (Preset::EnvC, [0.191, 0.077, 0.032, 0.077], 0.718),
        (Preset::EnvD, [0.077, 0.032, 0.077, 0.191], 0.282),
    ];
    let mut worst = 0.0_f64;
    let mut lines = Vec::new();
    for (preset, shares, lambda) in reference {
        let a = analytic_shares(&preset.config(10, 1, 0)).expect("presets are relevant");
        let got = [a.p_c1, a.p_c2, a.p_f1, a.p_f2, a.lambda];
        for (g, w) in got.iter().zip(shares.iter().chain([lambda].iter())) {
            worst = worst.max((g - w).abs());
        }
        lines.push(format!("{preset} lambda={:.4}", a.lambda));
    }
    verdict(
        worst <= 1e-3,
        format!("max |reference - analytic| = {worst:.2e}; {}", lines.join(", ")),
    )
}

struct PresetRun {
    preset: Preset,
    target: f64,
    summary: MonteCarloSummary,
    seconds: f64,
}

fn preset_runs() -> Vec<PresetRun> {
    Preset::ALL
        .into_iter()
        .map(|preset| {
            let cfg = preset.config(10_000, 1_000, 20_260_101);
            let target = analytic_shares(&cfg).unwrap().target_tau;
            let start = Instant::now();
            let summary = run_monte_carlo(&cfg);
            PresetRun {
                preset,
                target,
                summary,
                seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

fn monte_carlo_location(runs: &[PresetRun]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut total = 0.0;
    for r in runs {
        let m = r.summary.diiv.mean;
        pass &= (m - r.target).abs() <= 0.05 && r.summary.flagged == 0 && r.summary.records.len() == 1000;
        total += r.seconds;
        parts.push(format!(
            "{} mean={m:.4} target={:.4} flagged={}",
            r.preset, r.target, r.summary.flagged
        ));
    }
    verdict(pass, format!("{} ({total:.1}s)", parts.join("; ")))
}

/// Population over-identified 2SLS with instruments `(1, z1, z2)`, from
/// closed-form cell probabilities and conditional means.
fn population_overidentified(cfg: &EnvironmentConfig) -> f64 {
    let r = cfg.response();
    let p = cfg.profile();
    let corr = r.rho / (1.0 + r.rho * r.rho).sqrt();
    let q11 = 0.25 + corr.asin() / (2.0 * std::f64::consts::PI);
    let q = [[q11, 0.5 - q11], [0.5 - q11, q11]];
    let mut ezz = nalgebra::Matrix3::<f64>::zeros();
    let mut ezx = nalgebra::Matrix3x2::<f64>::zeros();
    let mut ezy = nalgebra::Vector3::<f64>::zeros();
    for (a, row) in q.iter().enumerate() {
        for (b, &prob) in row.iter().enumerate() {
            let take = |row: [f64; 2]| normal_cdf((row[0] * a as f64 + row[1] * b as f64 - r.threshold) / r.sigma);
            let (tc, tf) = (take(r.kappa[0]), take(r.kappa[1]));
            let ed = p.pi_a + p.pi_c * tc + p.pi_f * tf;
            let ey = p.pi_a * p.tau_a + p.pi_c * tc * p.tau_c + p.pi_f * tf * p.tau_f;
            let z = nalgebra::Vector3::new(1.0, a as f64, b as f64);
            ezz += prob * z * z.transpose();
            ezx += prob * z * nalgebra::RowVector2::new(1.0, ed);
            ezy += prob * z * ey;
        }
    }
    let w = ezz.try_inverse().unwrap();
    let lhs = ezx.transpose() * w * ezx;
    let rhs = ezx.transpose() * w * ezy;
    (lhs.try_inverse().unwrap() * rhs)[1]
}

fn convexity(runs: &[PresetRun]) -> Verdict {
    let mut inside = true;
    let mut parts = Vec::new();
    for r in runs {
        let m = r.summary.diiv.mean;
        inside &= (TAU_F - 0.05..=TAU_C + 0.05).contains(&m);
        parts.push(format!(
            "{} diiv={m:.4} overid={:.4}",
            r.preset, r.summary.overidentified_iv.mean
        ));
    }
    let b = runs.iter().find(|r| r.preset == Preset::EnvB).unwrap();
    let over_b = b.summary.overidentified_iv.mean;
    let population_b = population_overidentified(&Preset::EnvB.config(10, 1, 0));
    let pass = inside && over_b < TAU_F;
    verdict(
        pass,
        format!(
            "{}; env-b overid displacement below tau_F = {:.4} (population {population_b:.4})",
            parts.join("; "),
            over_b - TAU_F
        ),
    )
}

fn nondegenerate_parallel(rng: &mut ChaCha8Rng) -> (ObservationTable, f64) {
    loop {
        let total = rng.random_range(20..=200);
        let treated = rng.random_range(5..=total - 5);
        let t = balanced_parallel_table(rng, treated, total - treated);
        if let Ok(r) = diiv_from_table(&t, &DirectedDesign::encouragements(), DesignMode::Parallel) {
            if r.denominator.abs() > 1e-3 {
                return (t, r.tau);
            }
        }
    }
}

fn parallel_identity(tables: &[(ObservationTable, f64)]) -> Verdict {
    let mut worst = 0.0_f64;
    let mut ok = 0;
    for (t, ratio) in tables {
        match two_stage_parallel(t, SeKind::Robust, &[]) {
            Ok(rep) => {
                let e = rel(rep.tau, *ratio);
                worst = worst.max(e);
                ok += usize::from(e <= 1e-8);
            }
            Err(_) => worst = f64::INFINITY,
        }
    }
    verdict(
        ok == tables.len(),
        format!("{ok}/{} within 1e-8, max rel err {worst:.2e}", tables.len()),
    )
}

fn joint_identity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let signs = [
        (Sign::Plus, Sign::Plus),
        (Sign::Plus, Sign::Minus),
        (Sign::Minus, Sign::Plus),
        (Sign::Minus, Sign::Minus),
    ];
    let mut worst = 0.0_f64;
    let mut ok = 0;
    let mut total = 0;
    for &(s1, s2) in &signs {
        let design = DirectedDesign::new(s1, s2);
        let mut done = 0;
        while done < 250 {
            let n = rng.random_range(40..=400);
            let t = joint_table(&mut rng, n, 3, None);
            let cells = aligned_cells(&t, &design).unwrap();
            let Ok(oracle) = diiv_from_cells(&cells.y, &cells.d) else {
                continue;
            };
            if oracle.denominator.abs() <= 1e-3 {
                continue;
            }
            done += 1;
            total += 1;
            if let Ok(rep) = two_stage_joint(&t, &design, SeKind::Robust, &[], CrossTerm::Auto) {
                let e = rel(rep.tau, oracle.tau);
                worst = worst.max(e);
                ok += usize::from(e <= 1e-8);
            }
        }
    }
    // Empty aligned edges, located in raw coordinates.
    let mut missing_ok = 0;
    let mut missing_total = 0;
    for &(s1, s2) in &signs {
        let design = DirectedDesign::new(s1, s2);
        let flip = |bit: u8, s: Sign| if s == Sign::Minus { 1 - bit } else { bit };
        for (a, b) in [(1u8, 0u8), (0, 1)] {
            let raw = (flip(a, s1), flip(b, s2));
            let t = joint_table(&mut rng, 200, 5, Some(raw));
            missing_total += 1;
            let err = two_stage_joint(&t, &design, SeKind::Robust, &[], CrossTerm::Auto).err();
            missing_ok += usize::from(matches!(err, Some(DiivError::MissingCell(_))));
        }
    }
    verdict(
        ok == total && missing_ok == missing_total,
        format!("{ok}/{total} within 1e-8 (max rel err {worst:.2e}); MissingCell raised {missing_ok}/{missing_total}"),
    )
}

fn pool_and_flip_identity(tables: &[(ObservationTable, f64)]) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0_f64;
    let mut ok = 0;
    let mut total = 0;
    // Balanced tables plus frames of unequal size and split.
    let mut all: Vec<(ObservationTable, f64)> = tables.to_vec();
    while all.len() < tables.len() + 500 {
        let joined = unbalanced_parallel(&mut rng);
        if let Ok(r) = diiv_from_table(&joined, &DirectedDesign::encouragements(), DesignMode::Parallel) {
            all.push((joined, r.tau));
        }
    }
    for (t, ratio) in &all {
        total += 1;
        if let Ok(p) = pool_and_flip(t) {
            let e = rel(p, *ratio);
            worst = worst.max(e);
            ok += usize::from(e <= 1e-12);
        }
    }
    verdict(
        ok == total,
        format!("{ok}/{total} within 1e-12, max rel err {worst:.2e}"),
    )
}

fn unbalanced_parallel(rng: &mut ChaCha8Rng) -> ObservationTable {
    let n = rng.random_range(40..=400);
    let mut y = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut h = Vec::with_capacity(n);
    for i in 0..n {
        // The first eight rows cover every (frame, assignment) pair twice.
        let (zi, hi) = if i < 8 {
            ((i % 2) as u8, ((i / 2) % 2) as u8)
        } else {
            (u8::from(rng.random::<f64>() < 0.3), u8::from(rng.random::<f64>() < 0.7))
        };
        let took = u8::from(rng.random::<f64>() < 0.3 + 0.3 * f64::from(zi) - 0.1 * f64::from(hi));
        y.push(rng.random_range(-2.0..2.0) + 1.7 * f64::from(took));
        d.push(took);
        z.push(zi);
        h.push(hi);
    }
    ObservationTable::parallel(
        y,
        diiv_core::BinaryColumn::from_bits("d", d).unwrap(),
        diiv_core::BinaryColumn::from_bits("z1", z).unwrap(),
        diiv_core::BinaryColumn::from_bits("h", h).unwrap(),
    )
    .unwrap()
}

fn lemma_oracle() -> Verdict {
    let effects = [4.0, 1.0, TAU_C, TAU_F];
    let baseline = [0.25, -1.5, 2.0, 0.75, -0.5];
    let pops = DeterministicPopulation::enumerate(8, effects, &baseline);
    let mut exact = 0;
    for pop in &pops {
        let table = pop.table();
        let [pc1, pc2, pf1, pf2] = pop.shares();
        let ok = [(Instrument::First, pc1, pf1), (Instrument::Second, pc2, pf2)]
            .iter()
            .all(|&(j, pc, pf)| {
                let c = edge_contrasts(&table, j, DesignMode::Joint).unwrap();
                c.rf == pc * TAU_C - pf * TAU_F && c.fs == pc - pf
            });
        exact += usize::from(ok);
    }
    verdict(exact == pops.len(), format!("{exact}/{} populations exact", pops.len()))
}

/// Spreads the removed type's share proportionally over the others.
fn without_type(drop_c: bool) -> TypeProfile {
    let base = TypeProfile::reference();
    let kept = 1.0 - if drop_c { base.pi_c } else { base.pi_f };
    TypeProfile {
        pi_a: base.pi_a / kept,
        pi_n: base.pi_n / kept,
        pi_c: if drop_c { 0.0 } else { base.pi_c / kept },
        pi_f: if drop_c { base.pi_f / kept } else { 0.0 },
        ..base
    }
}

/// `pi_F = 0` under environment (a), where persuasion-prone units are the
/// responsive type; `pi_C = 0` under environment (b), where reactance-prone
/// units are. Environment (a) with `pi_C = 0` is reported but not gated: its
/// differential shift is small enough that the first stage is weak.
fn corollary_limits() -> Verdict {
    let run = |preset: Preset, drop_c: bool| {
        let cfg = preset
            .config(10_000, 1_000, 20_260_102)
            .with_profile(without_type(drop_c))
            .unwrap();
        let a = analytic_shares(&cfg).unwrap();
        let shift = (a.p_c1 - a.p_c2) - (a.p_f1 - a.p_f2);
        (run_monte_carlo(&cfg), shift)
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, preset, drop_c, want) in [
        ("pi_F=0 env-a", Preset::EnvA, false, TAU_C),
        ("pi_C=0 env-b", Preset::EnvB, true, TAU_F),
    ] {
        let (s, shift) = run(preset, drop_c);
        let m = s.diiv.mean;
        pass &= (m - want).abs() <= 0.05 && s.flagged == 0;
        parts.push(format!(
            "{label}: mean={m:.4} target={want} shift={shift:.4} flagged={}",
            s.flagged
        ));
    }
    let (weak, shift) = run(Preset::EnvA, true);
    parts.push(format!(
        "[not gated] pi_C=0 env-a: mean={:.4} median={:.4} shift={shift:.4}",
        weak.diiv.mean,
        weak.diiv.quantile(0.5).unwrap_or(f64::NAN)
    ));
    verdict(pass, parts.join("; "))
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "preset = env-a\nn = 5000\ntrials = 200\nseed = 31\n").unwrap();
    let run = |name: &str, extra: &[&str]| -> Vec<Vec<u8>> {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_diiv"))
            .arg("simulate")
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .args(extra)
            .output()
            .expect("binary runs")
            .status;
        assert!(status.success());
        ["trials.csv", "summary.txt", "histogram.csv"]
            .iter()
            .map(|f| std::fs::read(Path::new(&out).join(f)).unwrap())
            .collect()
    };
    let first = run("a", &[]);
    let second = run("b", &[]);
    let sequential = run("c", &["--sequential"]);
    let bytes: usize = first.iter().map(Vec::len).sum();
    verdict(
        first == second && first == sequential,
        format!(
            "two concurrent runs and one sequential run, {bytes} bytes each, identical: {}",
            first == second && first == sequential
        ),
    )
}

/// Normal CDF by Taylor series near the center and the Laplace continued
/// fraction in the tails.
fn phi_oracle(x: f64) -> f64 {
    let density = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if x.abs() <= 5.0 {
        let (mut term, mut sum, mut k) = (x, x, 1.0);
        while term.abs() > 1e-300 && k < 400.0 {
            term *= x * x / (2.0 * k + 1.0);
            sum += term;
            k += 1.0;
        }
        0.5 + density * sum
    } else {
        let a = x.abs();
        let mut cf = a;
        for k in (1..200).rev() {
            cf = a + k as f64 / cf;
        }
        let tail = density / cf;
        if x > 0.0 {
            1.0 - tail
        } else {
            tail
        }
    }
}

fn numerics() -> Verdict {
    let mut cdf_worst = 0.0_f64;
    for i in 0..=16_000 {
        let x = -8.0 + i as f64 * 1e-3;
        cdf_worst = cdf_worst.max((normal_cdf(x) - phi_oracle(x)).abs());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut ols_worst = 0.0_f64;
    for _ in 0..200 {
        let n = rng.random_range(20..=200);
        let k = rng.random_range(2..=6);
        let mut regs = vec![intercept(n)];
        for j in 1..k {
            regs.push((format!("x{j}"), (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()));
        }
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let fit = ols_fit(&DesignMatrix::new(y.clone(), regs.clone()).unwrap(), SeKind::Classical).unwrap();
        let x = nalgebra::DMatrix::from_fn(n, k, |i, j| regs[j].1[i]);
        let xty = x.transpose() * nalgebra::DVector::from_column_slice(&y);
        let beta = (x.transpose() * &x).cholesky().unwrap().solve(&xty);
        for (a, b) in fit.coefficients.iter().zip(beta.iter()) {
            ols_worst = ols_worst.max(rel(*a, *b));
        }
    }
    verdict(
        cdf_worst <= 1e-10 && ols_worst <= 1e-10,
        format!("normal CDF max abs err {cdf_worst:.2e} on [-8, 8]; OLS max rel err {ols_worst:.2e} over 200 systems"),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut results: Vec<(u8, &str, Verdict)> = Vec::new();
    let mut record = |id: u8, name: &'static str, v: Verdict| {
        println!(
            "criterion {id:>2} {name:<28} {}  {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        results.push((id, name, v));
    };

    record(1, "analytic shares", analytic_share_reproduction());
    let runs = preset_runs();
    record(2, "monte carlo location", monte_carlo_location(&runs));
    record(3, "convexity vs overidentified", convexity(&runs));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let parallel: Vec<_> = (0..1000).map(|_| nondegenerate_parallel(&mut rng)).collect();
    record(4, "parallel 2SLS identity", parallel_identity(&parallel));
    record(5, "joint 2SLS identity", joint_identity());
    record(6, "pool-and-flip identity", pool_and_flip_identity(&parallel));
    record(7, "finite-population contrasts", lemma_oracle());
    record(8, "single-type limits", corollary_limits());
    record(9, "determinism", determinism());
    record(10, "numerics", numerics());

    let failed = results.iter().filter(|(_, _, v)| !v.pass).count();
    println!(
        "acceptance: {}/{} passed in {:.1}s",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
