//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use dlpr::inner_admm::poisson_prox_scalar;
use dlpr::measurement::{generate_illumination, CdpOperator, Illumination, PtychoOperator, ZonePlateParams};
use dlpr::metrics::parse_trace_csv;
use dlpr::solvers::{grad_h, coupling_value, run_amm, run_palm, run_pr_baseline, StepRule};
use dlpr::{sparse, Algorithm, CMat, CoeffMatrix, InitU, L0Mode, MeasurementOperator, PatchConfig, Problem, SolverTrace};
use dlpr_cli::experiment::CellResult;
use dlpr_cli::{preset, run_experiment, simulate, ExperimentReport, ExperimentSpec};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = std::result::Result<String, String>;

fn cvec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    (0..n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

fn cmat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMat {
    CMat::from_vec(r, c, cvec(rng, r * c))
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

fn operators(side: usize, frame: usize, slides: [usize; 3]) -> Vec<(String, Box<dyn MeasurementOperator>)> {
    let mut ops: Vec<(String, Box<dyn MeasurementOperator>)> = Vec::new();
    for k in [1, 2, 4] {
        ops.push((format!("cdp K={k}"), Box::new(CdpOperator::octanary((side, side), k, 11).unwrap())));
    }
    let probe = generate_illumination(frame, Illumination::ZonePlateSynthetic(ZonePlateParams::default())).unwrap();
    for s in slides {
        let op = PtychoOperator::new((side, side), probe.clone(), frame, s).unwrap();
        ops.push((format!("ptycho slide={s}"), Box::new(op)));
    }
    ops
}

/// Largest entry of `|A^H A e_j - diag_j e_j|` over the probed pixels, relative to `max diag`.
fn probe_diag(op: &dyn MeasurementOperator, pixels: impl Iterator<Item = usize>) -> Result<f64, String> {
    let diag = op.normal_diag().ok_or("no diagonal")?;
    let (n, m) = (op.num_pixels(), op.num_measurements());
    let scale = diag.iter().cloned().fold(0.0, f64::max);
    let mut e = vec![C64::new(0.0, 0.0); n];
    let mut ae = vec![C64::new(0.0, 0.0); m];
    let mut back = vec![C64::new(0.0, 0.0); n];
    let mut worst: f64 = 0.0;
    for j in pixels {
        e[j] = C64::new(1.0, 0.0);
        op.apply(&e, &mut ae);
        op.apply_adjoint(&ae, &mut back);
        e[j] = C64::new(0.0, 0.0);
        for (i, b) in back.iter().enumerate() {
            let want = if i == j { diag[j] } else { 0.0 };
            worst = worst.max((b - want).norm() / scale);
        }
    }
    Ok(worst)
}

fn c1_operators() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_adj: f64 = 0.0;
    let mut worst_diag: f64 = 0.0;
    for (name, op) in operators(64, 32, [8, 16, 32]) {
        let n = op.num_pixels();
        let m = op.num_measurements();
        for _ in 0..3 {
            let u = cvec(&mut rng, n);
            let z = cvec(&mut rng, m);
            let mut au = vec![C64::new(0.0, 0.0); m];
            let mut az = vec![C64::new(0.0, 0.0); n];
            op.apply(&u, &mut au);
            op.apply_adjoint(&z, &mut az);
            let (l, r) = (dot(&au, &z), dot(&u, &az));
            worst_adj = worst_adj.max((l - r).norm() / l.norm().max(r.norm()));
        }
        let sample: Vec<usize> = (0..64).map(|_| rng.random_range(0..n)).collect();
        worst_diag = worst_diag.max(probe_diag(op.as_ref(), sample.into_iter()).map_err(|e| format!("{name}: {e}"))?);
    }
    // every pixel of n = 64 instances
    for (name, op) in operators(8, 8, [2, 4, 8]) {
        let n = op.num_pixels();
        worst_diag = worst_diag.max(probe_diag(op.as_ref(), 0..n).map_err(|e| format!("{name}: {e}"))?);
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("adjoint rel err {worst_adj:.1e}, diag probe err {worst_diag:.1e}, {secs:.1}s");
    if worst_adj <= 1e-10 && worst_diag <= 1e-12 && secs < 5.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn prox_objective(rho: f64, a: f64, f: f64, eta: f64, r: f64) -> f64 {
    let log = if f > 0.0 { f * (rho * rho).ln() } else { 0.0 };
    0.5 * eta * (rho * rho - log) + 0.5 * r * (rho - a) * (rho - a)
}

fn c2_prox() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = f64::NEG_INFINITY;
    const GRID: usize = 100_000;
    // grid points are k * h, so ln(rho^2) = 2 (ln h + ln k)
    let ln_k: Vec<f64> = (1..=GRID).map(|k| (k as f64).ln()).collect();
    for case in 0..10_000 {
        let w = C64::from_polar(rng.random_range(0.0..5.0), rng.random_range(-3.2..3.2));
        let f = if case % 10 == 0 { 0.0 } else { rng.random_range(0.0..30.0f64).floor() };
        let eta = 10f64.powf(rng.random_range(-2.0..1.0));
        let r = 10f64.powf(rng.random_range(-2.0..1.0));
        let z = poisson_prox_scalar(w, f, eta, r);
        let a = w.norm();
        let ours = prox_objective(z.norm(), a, f, eta, r);
        let h = (2.0 * (a + f.sqrt()) + 1.0) / GRID as f64;
        let ln_h = h.ln();
        let best = ln_k
            .iter()
            .enumerate()
            .map(|(k, lk)| {
                let rho = h * (k + 1) as f64;
                0.5 * eta * (rho * rho - 2.0 * f * (ln_h + lk)) + 0.5 * r * (rho - a) * (rho - a)
            })
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(ours - best);
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("max(prox - grid) = {worst:.1e} over 1e4 cases, {secs:.1}s");
    if worst <= 1e-9 && secs < 10.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    let qr = cmat(rng, n, n).qr();
    let (q, r) = (qr.q(), qr.r());
    // fix column phases so the draw is Haar distributed
    let mut q = q;
    for j in 0..n {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= ph;
        }
    }
    q
}

fn c3_dictionary() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_orth: f64 = 0.0;
    for _ in 0..200 {
        let p = cmat(&mut rng, 16, 49);
        let alpha = cmat(&mut rng, 16, 49);
        let coeff = CoeffMatrix::new(alpha.clone()).map_err(|e| e.to_string())?;
        let d = sparse::update_dictionary_amm(&p, &coeff, 4, None, None).map_err(|e| e.to_string())?;
        let dm = d.matrix();
        let ours = (dm * &alpha - &p).norm_squared();
        worst_orth = worst_orth.max((dm.adjoint() * dm - CMat::identity(16, 16)).norm());
        for _ in 0..1000 {
            let q = random_unitary(&mut rng, 16);
            worst_gap = worst_gap.max(ours - (q * &alpha - &p).norm_squared());
        }
    }
    let detail = format!("max(ours - probe) = {worst_gap:.2e}, max ||D*D - I|| = {worst_orth:.1e}");
    if worst_gap <= 0.0 && worst_orth <= 1e-10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c4_gradients() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = PatchConfig::new(4, 1).unwrap();
    let mut worst: f64 = 0.0;
    let h = 1e-6;
    for _ in 0..20 {
        let u = dlpr::ComplexImage::new(10, 10, cvec(&mut rng, 100)).unwrap();
        let d = cmat(&mut rng, 16, 16);
        let a = cmat(&mut rng, 16, 49);
        let g = grad_h(&u, &d, &a, &cfg).map_err(|e| e.to_string())?;
        let val = |u: &dlpr::ComplexImage, d: &CMat, a: &CMat| coupling_value(u, d, a, &cfg).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        let mut acc = |fd: C64, an: C64| {
            num += (fd - an).norm_sqr();
            den += an.norm_sqr();
        };
        for k in 0..100 {
            let mut fd = C64::new(0.0, 0.0);
            for (unit, slot) in [(C64::new(h, 0.0), 0), (C64::new(0.0, h), 1)] {
                let mut p = u.as_slice().to_vec();
                let mut m = p.clone();
                p[k] += unit;
                m[k] -= unit;
                let vp = val(&dlpr::ComplexImage::new(10, 10, p).unwrap(), &d, &a);
                let vm = val(&dlpr::ComplexImage::new(10, 10, m).unwrap(), &d, &a);
                let part = (vp - vm) / (2.0 * h);
                if slot == 0 { fd.re = part } else { fd.im = part }
            }
            acc(fd, g.u.as_slice()[k]);
        }
        for (target, grad) in [(0usize, &g.d), (1, &g.alpha)] {
            let base = if target == 0 { &d } else { &a };
            for idx in 0..base.len() {
                let mut fd = C64::new(0.0, 0.0);
                for (unit, slot) in [(C64::new(h, 0.0), 0), (C64::new(0.0, h), 1)] {
                    let mut p = base.clone();
                    let mut m = base.clone();
                    p[idx] += unit;
                    m[idx] -= unit;
                    let (vp, vm) = if target == 0 {
                        (val(&u, &p, &a), val(&u, &m, &a))
                    } else {
                        (val(&u, &d, &p), val(&u, &d, &m))
                    };
                    let part = (vp - vm) / (2.0 * h);
                    if slot == 0 { fd.re = part } else { fd.im = part }
                }
                acc(fd, grad[idx]);
            }
        }
        worst = worst.max((num / den).sqrt());
    }
    let detail = format!("max relative FD mismatch {worst:.1e} over 20 instances");
    if worst <= 1e-5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn traces(spec: &ExperimentSpec, report: &ExperimentReport, algorithm: Algorithm) -> Vec<(f64, SolverTrace)> {
    report
        .cells
        .iter()
        .filter(|c| c.algorithm == algorithm && c.outcome.is_ok())
        .map(|c| {
            let rel = c.files.iter().find(|f| f.ends_with("trace.csv")).expect("trace written");
            let text = std::fs::read_to_string(spec.out.join(rel)).unwrap();
            (c.delta, parse_trace_csv(&text).unwrap())
        })
        .collect()
}

fn c5_amm_descent(spec: &ExperimentSpec, report: &ExperimentReport, secs: f64) -> Check {
    let runs = traces(spec, report, Algorithm::Amm);
    if runs.len() != spec.deltas.len() {
        return Err("missing AMM runs".into());
    }
    let mut worst = f64::NEG_INFINITY;
    for (_, t) in &runs {
        let obj = t.objectives();
        let eps = 1e-6 * obj[0].abs();
        for w in obj.windows(2) {
            worst = worst.max((w[1] - w[0]) / eps);
        }
    }
    let per_image = secs / spec.images.len() as f64;
    let detail = format!("max increase {worst:.2} x eps_inner over {} runs, {per_image:.0}s per image", runs.len());
    if worst <= 1.0 && per_image < 120.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn solver_problem(spec: &ExperimentSpec, delta: f64, seed: u64) -> (dlpr_cli::Simulated, dlpr::ComplexImage) {
    let image = spec.images[0].load(spec.size).unwrap();
    let geometry = spec.geometries().remove(0);
    let sim = simulate(spec, &image, &geometry, delta, seed).unwrap();
    let problem = Problem::new(sim.op.as_ref(), &sim.f).unwrap();
    let mut cfg = spec.solver_config(Algorithm::PrBaseline, seed);
    cfg.init_u = InitU::AdjointSpectral;
    let base = run_pr_baseline(&problem, &cfg).unwrap().u;
    (sim, base)
}

fn c6_palm_decrease(spec: &ExperimentSpec) -> Check {
    let (sim, base) = solver_problem(spec, 1e-2, spec.seeds[0]);
    let problem = Problem::new(sim.op.as_ref(), &sim.f).unwrap();
    let mut cfg = spec.solver_config(Algorithm::Palm, spec.seeds[0]);
    cfg.step_rule = StepRule::LipschitzScaled { factor: 2.0 };
    cfg.init_u = InitU::Given(base);
    let out = run_palm(&problem, &cfg).map_err(|e| e.to_string())?;
    let mut worst = f64::NEG_INFINITY;
    let mut min_lambda = f64::INFINITY;
    for m in &out.monitor {
        let slack = (m.lambda_plus / 2.0) * m.step_sq - 1e-8 - (m.objective_before - m.objective_after);
        worst = worst.max(slack);
        min_lambda = min_lambda.min(m.lambda_plus);
    }
    let detail = format!(
        "{} steps, worst bound violation {worst:.2e}, min lambda+ {min_lambda:.3}",
        out.monitor.len()
    );
    if worst <= 0.0 && min_lambda > 0.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn snr_of(cells: &[CellResult], seed: u64, a: Algorithm) -> Option<f64> {
    cells
        .iter()
        .find(|c| c.seed == seed && c.algorithm == a)
        .and_then(|c| c.outcome.as_ref().ok())
        .map(|m| m.snr_db)
}

fn c7_gain(spec: &ExperimentSpec) -> Check {
    let mut spec = spec.clone();
    spec.deltas = vec![1e-2];
    spec.seeds = vec![1, 2, 3];
    let dir = tempfile::tempdir().unwrap();
    spec.out = dir.path().to_path_buf();
    let start = Instant::now();
    let report = run_experiment(&spec).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let mut lines = Vec::new();
    let mut ok = secs < 300.0;
    for &s in &spec.seeds {
        let pr = snr_of(&report.cells, s, Algorithm::PrBaseline);
        let amm = snr_of(&report.cells, s, Algorithm::Amm);
        let palm = snr_of(&report.cells, s, Algorithm::Palm);
        match (pr, amm, palm) {
            (Some(p), Some(a), Some(q)) => {
                ok &= a >= p + 5.0 && q >= p + 5.0;
                lines.push(format!("seed {s}: PR {p:.2} AMM {a:.2} PALM {q:.2}"));
            }
            _ => {
                ok = false;
                lines.push(format!("seed {s}: failed cell"));
            }
        }
    }
    let detail = format!("{}; {secs:.0}s", lines.join("; "));
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c8_anisotropic() -> Check {
    let mut spec = preset("cdp-complex-desk").unwrap();
    spec.seeds = vec![1];
    let (sim, base) = solver_problem(&spec, 0.1, 1);
    let problem = Problem::new(sim.op.as_ref(), &sim.f).unwrap().with_truth(&sim.truth).unwrap();
    let mut results = BTreeMap::new();
    for (name, mode) in [("iso", L0Mode::Isotropic), ("aniso", L0Mode::Anisotropic)] {
        let mut cfg = spec.solver_config(Algorithm::Amm, 1);
        cfg.params.l0_mode = mode;
        cfg.init_u = InitU::Given(base.clone());
        let out = run_amm(&problem, &cfg).map_err(|e| e.to_string())?;
        let snr = out.trace.last().unwrap().snr_db;
        let s_im = out.alpha.unwrap().sparsity_imag();
        results.insert(name, (snr, s_im));
    }
    let (iso, aniso) = (results["iso"], results["aniso"]);
    let detail = format!(
        "SNR iso {:.2} aniso {:.2}; S(Im alpha) iso {:.2}% aniso {:.2}%",
        iso.0, aniso.0, iso.1, aniso.1
    );
    if aniso.0 >= iso.0 - 0.1 && aniso.1 < 0.2 * iso.1 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c9_traces(spec: &ExperimentSpec, report: &ExperimentReport) -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for a in [Algorithm::Amm, Algorithm::Palm] {
        for (delta, t) in traces(spec, report, a) {
            let last = t.last().unwrap();
            let snr: Vec<f64> = t.records.iter().map(|r| r.snr_db).collect();
            let tail = &snr[snr.len() - (snr.len() / 5).max(2)..];
            let mut peak = f64::NEG_INFINITY;
            let mut drop: f64 = 0.0;
            for &s in tail {
                drop = drop.max(peak - s);
                peak = peak.max(s);
            }
            ok &= last.err_u < 1e-2 && last.err_d < 1e-2 && drop <= 0.2;
            parts.push(format!(
                "{} d={delta}: err_u {:.1e} err_D {:.1e} tail drop {drop:.3}",
                a.name(),
                last.err_u,
                last.err_d
            ));
        }
    }
    let detail = parts.join("; ");
    if ok && parts.len() == 2 * spec.deltas.len() {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn manifest_files(root: &Path) -> Vec<String> {
    std::fs::read_to_string(root.join("manifest.sha256"))
        .unwrap()
        .lines()
        .map(|l| l.split_once("  ").unwrap().1.to_string())
        .collect()
}

fn c10_determinism(a: &Path, b: &Path) -> Check {
    let files = manifest_files(a);
    if files != manifest_files(b) {
        return Err("file lists differ".into());
    }
    let mut all = files.clone();
    all.push("manifest.sha256".into());
    let differing: Vec<&String> = all
        .iter()
        .filter(|f| std::fs::read(a.join(f)).unwrap() != std::fs::read(b.join(f)).unwrap())
        .collect();
    let csvs = files.iter().filter(|f| f.ends_with(".csv")).count();
    let recon = files.iter().filter(|f| f.ends_with("u.cprm")).count();
    if differing.is_empty() && csvs > 0 && recon > 0 {
        Ok(format!("{} files identical ({csvs} csv, {recon} reconstructions)", all.len()))
    } else {
        Err(format!("differing: {differing:?}"))
    }
}

fn main() {
    // `cargo test --test acceptance -- 3 7` runs a subset
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let want = |id: usize| only.is_empty() || only.contains(&id);
    let mut failed = 0;
    let mut report_line = |id: usize, name: &str, result: Check| match result {
        Ok(d) => println!("criterion {id:>2} PASS  {name}: {d}"),
        Err(d) => {
            failed += 1;
            println!("criterion {id:>2} FAIL  {name}: {d}")
        }
    };
    if want(1) {
        report_line(1, "operator adjoints and normal diagonal", c1_operators());
    }
    if want(2) {
        report_line(2, "Poisson prox vs grid search", c2_prox());
    }
    if want(3) {
        report_line(3, "dictionary update vs orthogonal probes", c3_dictionary());
    }
    if want(4) {
        report_line(4, "coupling gradients vs finite differences", c4_gradients());
    }

    let mut spec = preset("cdp-real-desk").unwrap();
    let dir_a = tempfile::tempdir().unwrap();
    spec.out = dir_a.path().to_path_buf();
    let shared = [5, 9, 10].iter().any(|&i| want(i));
    let run_a = shared.then(|| {
        let start = Instant::now();
        let report = run_experiment(&spec).expect("desk preset runs");
        (report, start.elapsed().as_secs_f64())
    });
    if want(5) {
        let (report, secs) = run_a.as_ref().unwrap();
        report_line(5, "AMM monotone descent", c5_amm_descent(&spec, report, *secs));
    }
    if want(6) {
        report_line(6, "PALM sufficient decrease", c6_palm_decrease(&spec));
    }
    if want(7) {
        report_line(7, "denoising gain over PR", c7_gain(&spec));
    }
    if want(8) {
        report_line(8, "anisotropic L0 on complex phantom", c8_anisotropic());
    }
    if want(9) {
        report_line(9, "convergence traces", c9_traces(&spec, &run_a.as_ref().unwrap().0));
    }
    if want(10) {
        let dir_b = tempfile::tempdir().unwrap();
        let mut spec_b = spec.clone();
        spec_b.out = dir_b.path().to_path_buf();
        run_experiment(&spec_b).expect("desk preset runs");
        report_line(10, "end-to-end determinism", c10_determinism(dir_a.path(), dir_b.path()));
    }

    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
