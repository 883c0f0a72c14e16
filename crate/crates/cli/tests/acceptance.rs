//! Acceptance criteria 1–10. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any fails. Each criterion pairs the library
//! certificate with an oracle computed here from the raw problem data.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use blockopt_cli::trace_io;
use blockopt_core::admm::{
    check_phi_descent, check_phi_monotone, check_uv_membership, compute_aux, descent_coefficients, kkt_check,
    phi_weight, run_admm, AdmmConfig, AdmmProblem, AdmmTrace, KktPair,
};
use blockopt_core::bcd::{
    check_finite_length, check_limit_criticality, check_subdiff_bound, check_sufficient_descent,
    check_witness_membership, run_bcd, BcdConfig, BcdTrace,
};
use blockopt_core::kl::{fit_kl_exponent, kl_inequality_along_trace, kl_samples, Desingularizer, KlWindow};
use blockopt_core::problems::{builtin, AdmmInstance, BcdInstance, Builtin, BuiltinProblem, DEFAULT_SEED};
use blockopt_core::prox::prox;
use blockopt_core::smooth::{CouplingInX, CouplingInY, LeastSquares, SmoothCoupling, SmoothFn};
use blockopt_core::{Atom, LinOp, Rng, Vector};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// dense oracles on the row-major data

fn mv(a: &LinOp, v: &[f64]) -> Vec<f64> {
    let d = a.data();
    (0..a.rows())
        .map(|i| d[i * a.cols()..(i + 1) * a.cols()].iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

fn mtv(a: &LinOp, w: &[f64]) -> Vec<f64> {
    let d = a.data();
    let mut out = vec![0.0; a.cols()];
    for (i, wi) in w.iter().enumerate() {
        for (j, o) in out.iter_mut().enumerate() {
            *o += d[i * a.cols() + j] * wi;
        }
    }
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn scale(s: f64, a: &[f64]) -> Vec<f64> {
    a.iter().map(|x| s * x).collect()
}

fn l1_weight(a: &Atom) -> f64 {
    match a {
        Atom::Zero => 0.0,
        Atom::L1 { weight } => *weight,
        other => panic!("oracle handles zero and l1 only, got {}", other.name()),
    }
}

/// dist(g, λ∂‖·‖₁(x)) coordinatewise.
fn dist_l1(lambda: f64, x: &[f64], g: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .map(|(&xi, &gi)| {
            let d = if xi > 0.0 {
                gi - lambda
            } else if xi < 0.0 {
                gi + lambda
            } else {
                (gi.abs() - lambda).max(0.0)
            };
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Largest eigenvalue of MᵀM by power iteration.
fn gram_lambda_max(m: &LinOp) -> f64 {
    let mut v = vec![1.0; m.cols()];
    let mut lam = 0.0;
    for _ in 0..500 {
        let w = mtv(m, &mv(m, &v));
        lam = norm(&w);
        v = scale(1.0 / lam, &w);
    }
    lam
}

/// ½‖Mz − c‖² + λ‖z‖₁ by restarted FISTA until dist(0, ∂F) ≤ tol.
fn fista_lasso(m: &LinOp, c: &[f64], lambda: f64, tol: f64) -> (Vec<f64>, f64) {
    let lip = gram_lambda_max(m) * 1.01;
    let n = m.cols();
    let grad = |z: &[f64]| mtv(m, &sub(&mv(m, z), c));
    let soft = |v: f64, t: f64| v.signum() * (v.abs() - t).max(0.0);
    let (mut x, mut x_prev, mut t) = (vec![0.0; n], vec![0.0; n], 1.0f64);
    for _ in 0..500_000 {
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        let v: Vec<f64> = x.iter().zip(&x_prev).map(|(a, b)| a + beta * (a - b)).collect();
        let g = grad(&v);
        let next: Vec<f64> = v.iter().zip(&g).map(|(vi, gi)| soft(vi - gi / lip, lambda / lip)).collect();
        let restart = sub(&v, &next).iter().zip(sub(&next, &x)).map(|(a, b)| a * b).sum::<f64>() > 0.0;
        x_prev = std::mem::replace(&mut x, next);
        t = if restart { 1.0 } else { t_next };
        if restart {
            x_prev.clone_from(&x);
        }
        if dist_l1(lambda, &x, &scale(-1.0, &grad(&x))) <= tol {
            let r = sub(&mv(m, &x), c);
            let f = 0.5 * norm(&r).powi(2) + lambda * x.iter().map(|v| v.abs()).sum::<f64>();
            return (x, f);
        }
    }
    panic!("oracle FISTA did not reach {tol:e}");
}

/// ψ(x, y) = λ_f‖x‖₁ + λ_g‖y‖₁ + ½‖Ax + By − c‖² + (μ/2)‖(x, y)‖².
struct BcdOracle {
    a: LinOp,
    b: LinOp,
    c: Vec<f64>,
    mu: f64,
    wf: f64,
    wg: f64,
}

impl BcdOracle {
    fn new(inst: &BcdInstance) -> Self {
        let q = &inst.coupling;
        BcdOracle {
            a: q.a().clone(),
            b: q.b().clone(),
            c: q.c().as_slice().to_vec(),
            mu: q.mu(),
            wf: l1_weight(inst.problem.f()),
            wg: l1_weight(inst.problem.g()),
        }
    }

    fn residual(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        sub(&add(&mv(&self.a, x), &mv(&self.b, y)), &self.c)
    }

    fn psi(&self, x: &[f64], y: &[f64]) -> f64 {
        let l1 = |v: &[f64]| v.iter().map(|e| e.abs()).sum::<f64>();
        0.5 * norm(&self.residual(x, y)).powi(2)
            + 0.5 * self.mu * (norm(x).powi(2) + norm(y).powi(2))
            + self.wf * l1(x)
            + self.wg * l1(y)
    }

    fn grads(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let r = self.residual(x, y);
        (add(&mtv(&self.a, &r), &scale(self.mu, x)), add(&mtv(&self.b, &r), &scale(self.mu, y)))
    }

    /// dist(0, ∂ψ(x, y)) in the product norm.
    fn stationarity(&self, x: &[f64], y: &[f64]) -> f64 {
        let (gx, gy) = self.grads(x, y);
        dist_l1(self.wf, x, &scale(-1.0, &gx)).hypot(dist_l1(self.wg, y, &scale(-1.0, &gy)))
    }

    fn lipschitz(&self) -> f64 {
        gram_lambda_max(&LinOp::hstack(&self.a, &self.b).unwrap()) + self.mu
    }

    fn stacked(&self) -> LinOp {
        LinOp::hstack(&self.a, &self.b).unwrap()
    }
}

/// Independent KKT residuals for blocks built from zero/l1 atoms and an
/// optional least-squares addend: (primal, dual1, dual2).
fn kkt_oracle(p: &AdmmProblem, x1: &[f64], x2: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let primal = norm(&sub(&add(&mv(p.a1(), x1), &mv(p.a2(), x2)), p.b().as_slice()));
    let dual = |i: usize, x: &[f64]| {
        let blk = p.block(i);
        let mut g = scale(-1.0, &mtv(&blk.a, y));
        if let Some(ls) = &blk.smooth {
            g = sub(&g, &mtv(&ls.matrix, &sub(&mv(&ls.matrix, x), ls.target.as_slice())));
        }
        dist_l1(l1_weight(&blk.atom), x, &g)
    };
    (primal, dual(0, x1), dual(1, x2))
}

#[derive(Default)]
struct Ctx {
    /// (builtin, γ, instance, trace, solve time) for the 5000-iteration runs.
    bcd: Vec<(Builtin, f64, BcdInstance, BcdTrace, Duration)>,
    /// consensus-lasso traces over the τ × ρ grid.
    consensus: Vec<(f64, f64, AdmmTrace)>,
    consensus_inst: Option<AdmmInstance>,
    elapsed_1_to_9: Option<Duration>,
}

const GAMMAS: [f64; 3] = [1.1, 2.0, 10.0];
const BCD_ITERS: usize = 5000;

fn bcd_instance(which: Builtin) -> BcdInstance {
    builtin(which, DEFAULT_SEED).unwrap().bcd().unwrap()
}

fn admm_instance(which: Builtin) -> AdmmInstance {
    builtin(which, DEFAULT_SEED).unwrap().admm().unwrap()
}

fn c1_sufficient_descent(ctx: &mut Ctx) -> Outcome {
    let mut worst_time = Duration::ZERO;
    let mut min_margin = f64::INFINITY;
    for which in [Builtin::Quadratic, Builtin::LassoBcd] {
        let inst = bcd_instance(which);
        let oracle = BcdOracle::new(&inst);
        for gamma in GAMMAS {
            let t0 = Instant::now();
            let trace = run_bcd(&inst.problem, &BcdConfig::new(gamma, BCD_ITERS).map_err(err)?).map_err(err)?;
            let took = t0.elapsed();
            worst_time = worst_time.max(took);
            let tag = format!("{which} γ={gamma}");
            ensure(trace.iterations() >= BCD_ITERS, || format!("{tag}: only {} iterations", trace.iterations()))?;
            ensure(took < Duration::from_secs(5), || format!("{tag}: {took:?} ≥ 5 s"))?;
            let l = trace.lipschitz;
            ensure(l >= oracle.lipschitz() * (1.0 - 1e-9), || format!("{tag}: l = {l} below the gradient Lipschitz constant"))?;
            let lib = check_sufficient_descent(&trace, gamma, l).map_err(err)?;
            ensure(lib.passed() && lib.violation_count == 0, || format!("{tag}: {:?}", lib.failure_messages()))?;
            let psi: Vec<f64> = trace.records.iter().map(|r| oracle.psi(r.z.x.as_slice(), r.z.y.as_slice())).collect();
            let slack = 1e-9 * (1.0 + psi[0].abs());
            let rho1 = 0.5 * (gamma - 1.0) * l;
            for (k, w) in trace.records.windows(2).enumerate() {
                let step = norm(&sub(&w[1].z.concat(), &w[0].z.concat()));
                let margin = psi[k] - psi[k + 1] + slack - rho1 * step * step;
                min_margin = min_margin.min(margin);
                ensure(margin >= 0.0, || format!("{tag}: descent violated at k={k}, margin {margin:e}"))?;
            }
            ctx.bcd.push((which, gamma, inst.clone(), trace, took));
        }
    }
    Ok(format!("6 configs × {BCD_ITERS} iterations, 0 violations, min margin {min_margin:.2e}, slowest run {worst_time:.2?}"))
}

fn c2_subgradient_bound(ctx: &mut Ctx) -> Outcome {
    let mut worst_dist = 0.0f64;
    let mut ratios = Vec::new();
    for (which, gamma, inst, trace, _) in &ctx.bcd {
        let tag = format!("{which} γ={gamma}");
        let l = trace.lipschitz;
        let member = check_witness_membership(&inst.problem, trace, *gamma, 1e-8).map_err(err)?;
        ensure(member.passed(), || format!("{tag}: {:?}", member.failure_messages()))?;
        let bound = check_subdiff_bound(&inst.problem, trace, *gamma, l).map_err(err)?;
        ensure(bound.passed(), || format!("{tag}: {:?}", bound.failure_messages()))?;
        let lib_ratio = bound.metrics["max_ratio"];
        ensure(lib_ratio <= 2.0 * gamma + 2.0, || format!("{tag}: recorded ratio {lib_ratio} above 2γ+2"))?;

        let o = BcdOracle::new(inst);
        let m_const = (2.0 * gamma + 2.0) * l;
        let slack = 1e-9 * l;
        let mut max_ratio = 0.0f64;
        for k in 1..trace.len() {
            let (zp, z) = (&trace.records[k - 1].z, &trace.records[k].z);
            let (xp, yp, x, y) = (zp.x.as_slice(), zp.y.as_slice(), z.x.as_slice(), z.y.as_slice());
            let (gx, gy) = o.grads(x, y);
            let (gxp, _) = o.grads(xp, yp);
            let (_, gy_mid) = o.grads(x, yp);
            let ax = add(&scale(gamma * l, &sub(xp, x)), &sub(&gx, &gxp));
            let ay = add(&scale(gamma * l, &sub(yp, y)), &sub(&gy, &gy_mid));
            let dx = dist_l1(o.wf, x, &sub(&ax, &gx));
            let dy = dist_l1(o.wg, y, &sub(&ay, &gy));
            worst_dist = worst_dist.max(dx).max(dy);
            ensure(dx <= 1e-8 && dy <= 1e-8, || format!("{tag}: witness outside ∂ψ at k={k} ({dx:e}, {dy:e})"))?;
            let lhs = norm(&ax) + norm(&ay);
            let step = norm(&sub(&z.concat(), &zp.concat()));
            ensure(lhs <= m_const * step + slack, || format!("{tag}: bound violated at k={k}: {lhs:e} > {:e}", m_const * step))?;
            if lhs > slack && step > 0.0 {
                max_ratio = max_ratio.max(lhs / (l * step));
            }
        }
        ensure(max_ratio <= 2.0 * gamma + 2.0, || format!("{tag}: ratio {max_ratio}"))?;
        ratios.push(format!("{gamma}:{max_ratio:.2}"));
    }
    Ok(format!("membership max dist {worst_dist:.1e} ≤ 1e-8; max ‖A‖/(l‖Δz‖) per γ [{}] ≤ 2γ+2", ratios.join(" ")))
}

fn c3_finite_length(ctx: &mut Ctx) -> Outcome {
    let inst = bcd_instance(Builtin::LassoBcd);
    let o = BcdOracle::new(&inst);
    let t0 = Instant::now();
    let (z_ref, f_ref) = fista_lasso(&o.stacked(), &o.c, o.wf, 1e-10);
    let ref_time = t0.elapsed();
    ensure((o.wf - o.wg).abs() == 0.0, || "lasso-bcd uses one weight for both blocks".into())?;
    ensure((f_ref - inst.psi_star).abs() <= 1e-9, || format!("oracle ψ* {f_ref} vs library {}", inst.psi_star))?;
    let mut details = Vec::new();
    for (which, gamma, _, trace, _) in ctx.bcd.iter().filter(|e| e.0 == Builtin::LassoBcd) {
        let tag = format!("{which} γ={gamma}");
        let pts: Vec<Vec<f64>> = trace.records.iter().map(|r| r.z.concat()).collect();
        let tol = 1e-6 * (1.0 + norm(&pts[0]));
        let tail = &pts[pts.len() - pts.len() / 10..];
        let mut spread = 0.0f64;
        for i in 0..tail.len() {
            for j in i + 1..tail.len() {
                spread = spread.max(norm(&sub(&tail[i], &tail[j])));
            }
        }
        ensure(spread <= tol, || format!("{tag}: tail spread {spread:e} > {tol:e}"))?;
        let last = &trace.last().z;
        let dist = o.stationarity(last.x.as_slice(), last.y.as_slice());
        ensure(dist <= 1e-6, || format!("{tag}: dist(0, ∂ψ) = {dist:e}"))?;
        let gap = (o.psi(last.x.as_slice(), last.y.as_slice()) - f_ref).abs();
        ensure(gap <= 1e-8, || format!("{tag}: objective gap {gap:e}"))?;
        let far = norm(&sub(&last.concat(), &z_ref));
        let lib_len = check_finite_length(trace);
        ensure(lib_len.passed(), || format!("{tag}: {:?} {:?}", lib_len.failure_messages(), lib_len.note))?;
        let lib_crit = check_limit_criticality(&inst.problem, trace, 1e-6).map_err(err)?;
        ensure(lib_crit.passed(), || format!("{tag}: {:?} {:?}", lib_crit.failure_messages(), lib_crit.note))?;
        details.push(format!("γ={gamma}: spread {spread:.1e} dist {dist:.1e} gap {gap:.1e} ‖z−z*‖ {far:.1e}"));
    }
    Ok(format!("{}; reference by oracle FISTA in {ref_time:.2?}", details.join("; ")))
}

const TAUS: [f64; 4] = [0.5, 1.0, 1.5, 1.6];
const RHOS: [f64; 3] = [0.1, 1.0, 10.0];

fn c4_phi_descent(ctx: &mut Ctx) -> Outcome {
    let inst = admm_instance(Builtin::ConsensusLasso);
    let p = &inst.problem;
    let (n, m, q) = p.dims();
    ensure((q, n, m) == (50, 50, 50) && p.block(0).smooth.as_ref().unwrap().matrix.rows() == 20, || {
        format!("unexpected consensus-lasso shape {:?}", p.dims())
    })?;
    let reference = &inst.references[0];
    let mut slowest = Duration::ZERO;
    let mut min_margin = f64::INFINITY;
    for tau in TAUS {
        for rho in RHOS {
            let tag = format!("τ={tau} ρ={rho}");
            let cfg = AdmmConfig::new(rho, tau).map_err(err)?.with_max_iters(5000).map_err(err)?;
            let t0 = Instant::now();
            let trace = run_admm(p, &cfg).map_err(err)?;
            let took = t0.elapsed();
            slowest = slowest.max(took);
            ensure(took < Duration::from_secs(10), || format!("{tag}: {took:?}"))?;
            let aux = compute_aux(p, &trace, reference).map_err(err)?;
            let lib = check_phi_descent(&aux, rho, tau).map_err(err)?;
            ensure(lib.passed(), || format!("{tag}: {:?}", lib.failure_messages()))?;
            ensure(check_phi_monotone(&aux).passed(), || format!("{tag}: library Φ not monotone"))?;

            let w = phi_weight(tau);
            let (c1, c2) = descent_coefficients(tau);
            ensure(c1 > 0.0 && c2 > 0.0, || format!("{tag}: coefficients ({c1}, {c2})"))?;
            let res_of = |x1: &[f64], x2: &[f64]| {
                add(&mv(p.a1(), &sub(x1, reference.x1.as_slice())), &mv(p.a2(), &sub(x2, reference.x2.as_slice())))
            };
            let phi: Vec<f64> = trace
                .records
                .iter()
                .map(|r| {
                    let ey = sub(r.y.as_slice(), reference.y.as_slice());
                    let a2e2 = mv(p.a2(), &sub(r.x2.as_slice(), reference.x2.as_slice()));
                    let res = res_of(r.x1.as_slice(), r.x2.as_slice());
                    norm(&ey).powi(2) / (tau * rho) + rho * norm(&a2e2).powi(2) + w * rho * norm(&res).powi(2)
                })
                .collect();
            let slack = 1e-8 * (1.0 + phi[1]);
            for k in 1..trace.len() - 1 {
                let (cur, next) = (&trace.records[k], &trace.records[k + 1]);
                let step = mv(p.a2(), &sub(cur.x2.as_slice(), next.x2.as_slice()));
                let res = res_of(next.x1.as_slice(), next.x2.as_slice());
                let lhs = c1 * rho * norm(&step).powi(2) + c2 * rho * norm(&res).powi(2);
                let margin = phi[k] - phi[k + 1] + slack - lhs;
                min_margin = min_margin.min(margin / (1.0 + phi[1]));
                ensure(margin >= 0.0, || format!("{tag}: Φ descent violated at k={k}, margin {margin:e}"))?;
                ensure(phi[k + 1] <= phi[k] + slack, || format!("{tag}: Φ increased at k={k}"))?;
            }
            ctx.consensus.push((tau, rho, trace));
        }
    }
    ctx.consensus_inst = Some(inst);
    Ok(format!("12 configs, 0 violations, min relative margin {min_margin:.2e}, slowest run {slowest:.2?}"))
}

fn c5_uv_membership(ctx: &mut Ctx) -> Outcome {
    let inst = ctx.consensus_inst.as_ref().ok_or("criterion 4 did not produce traces")?;
    let p = &inst.problem;
    ensure(p.path(0).is_exact() && p.path(1).is_exact(), || "consensus-lasso should use the closed-form path".into())?;
    ensure(p.uv_tolerance(1e-10) == 1e-10, || "exact-path tolerance".into())?;
    let mut worst_exact = 0.0f64;
    let mut checked = 0usize;
    let mut exact_runs: Vec<(&AdmmProblem, &KktPair, &AdmmTrace)> =
        ctx.consensus.iter().map(|(_, _, t)| (p, &inst.references[0], t)).collect();
    let bp = admm_instance(Builtin::BasisPursuit);
    let bp_trace = run_admm(&bp.problem, &AdmmConfig::new(1.0, 1.3).map_err(err)?).map_err(err)?;
    ensure(bp.problem.path(0).is_exact() && bp.problem.path(1).is_exact(), || "basis-pursuit path".into())?;
    exact_runs.push((&bp.problem, &bp.references[0], &bp_trace));
    for (prob, reference, trace) in &exact_runs {
        let aux = compute_aux(prob, trace, reference).map_err(err)?;
        let lib = check_uv_membership(prob, &aux, trace, 1e-10).map_err(err)?;
        ensure(lib.passed(), || format!("τ={} ρ={}: {:?}", trace.tau, trace.rho, lib.failure_messages()))?;
        worst_exact = worst_exact.max(uv_oracle(prob, trace));
        checked += trace.len() - 1;
    }
    ensure(worst_exact <= 1e-10, || format!("oracle u/v distance {worst_exact:e} > 1e-10"))?;

    let li = admm_instance(Builtin::LassoInner);
    ensure(!li.problem.path(0).is_exact(), || "lasso-inner should use the inner solver".into())?;
    let mut worst_inner = 0.0f64;
    for tau in [0.8, 1.0, 1.5] {
        let cfg = AdmmConfig::new(1.0, tau).map_err(err)?;
        let tol = 100.0 * cfg.inner_tol();
        ensure(li.problem.uv_tolerance(cfg.inner_tol()) == tol, || "inner-path tolerance".into())?;
        let trace = run_admm(&li.problem, &cfg).map_err(err)?;
        let aux = compute_aux(&li.problem, &trace, &li.references[0]).map_err(err)?;
        let lib = check_uv_membership(&li.problem, &aux, &trace, tol).map_err(err)?;
        ensure(lib.passed(), || format!("lasso-inner τ={tau}: {:?}", lib.failure_messages()))?;
        let d = uv_oracle(&li.problem, &trace);
        ensure(d <= tol, || format!("lasso-inner τ={tau}: oracle distance {d:e} > {tol:e}"))?;
        worst_inner = worst_inner.max(d / tol);
        checked += trace.len() - 1;
    }
    Ok(format!(
        "{checked} iterates; closed-form max dist {worst_exact:.1e} ≤ 1e-10; inner-solver max dist {worst_inner:.2}×(100·inner_tol)"
    ))
}

/// max_k dist(u^k, ∂F1(x1^k)) ∨ dist(v^k, ∂F2(x2^k)) from the u/v formulas.
fn uv_oracle(p: &AdmmProblem, trace: &AdmmTrace) -> f64 {
    let (rho, tau) = (trace.rho, trace.tau);
    let mut worst = 0.0f64;
    for k in 1..trace.len() {
        let (prev, cur) = (&trace.records[k - 1], &trace.records[k]);
        let r = sub(&add(&mv(p.a1(), cur.x1.as_slice()), &mv(p.a2(), cur.x2.as_slice())), p.b().as_slice());
        let base = add(cur.y.as_slice(), &scale((1.0 - tau) * rho, &r));
        let kick = scale(rho, &mv(p.a2(), &sub(prev.x2.as_slice(), cur.x2.as_slice())));
        let u = scale(-1.0, &mtv(p.a1(), &add(&base, &kick)));
        let v = scale(-1.0, &mtv(p.a2(), &base));
        for (i, (x, g)) in [(cur.x1.as_slice(), u), (cur.x2.as_slice(), v)].into_iter().enumerate() {
            let blk = p.block(i);
            let mut g = g;
            if let Some(ls) = &blk.smooth {
                g = sub(&g, &mtv(&ls.matrix, &sub(&mv(&ls.matrix, x), ls.target.as_slice())));
            }
            worst = worst.max(dist_l1(l1_weight(&blk.atom), x, &g));
        }
    }
    worst
}

fn c6_kkt_convergence(_: &mut Ctx) -> Outcome {
    let mut details = Vec::new();
    for which in [Builtin::ConsensusLasso, Builtin::BasisPursuit] {
        let inst = admm_instance(which);
        let p = &inst.problem;
        let cfg = AdmmConfig::new(1.0, 1.0).map_err(err)?.with_max_iters(5000).map_err(err)?;
        let trace = run_admm(p, &cfg).map_err(err)?;
        let last = trace.last();
        let (x1, x2, y) = (last.x1.as_slice(), last.x2.as_slice(), last.y.as_slice());
        let lib = kkt_check(p, &last.x1, &last.x2, &last.y, 1e-5).map_err(err)?;
        ensure(lib.passed, || format!("{which}: library KKT {lib:?}"))?;
        let (pr, d1, d2) = kkt_oracle(p, x1, x2, y);
        ensure(pr <= 1e-5 && d1 <= 1e-5 && d2 <= 1e-5, || format!("{which}: KKT residuals ({pr:e}, {d1:e}, {d2:e})"))?;
        let x_star: Vec<f64> = match which {
            Builtin::ConsensusLasso => {
                let ls = p.block(0).smooth.as_ref().unwrap();
                fista_lasso(&ls.matrix, ls.target.as_slice(), l1_weight(&p.block(1).atom), 1e-10).0
            }
            _ => {
                // planted sparse solution: feasible, 3-sparse, matches the built-in reference
                let planted = inst.references[0].x2.as_slice().to_vec();
                let (rp, _, _) = kkt_oracle(p, &planted, &planted, inst.references[0].y.as_slice());
                ensure(rp <= 1e-12, || format!("planted point infeasible: {rp:e}"))?;
                ensure(planted.iter().filter(|v| **v != 0.0).count() == 3, || "planted support".into())?;
                planted
            }
        };
        let dist = norm(&sub(x1, &x_star)).hypot(norm(&sub(x2, &x_star)));
        ensure(dist <= 1e-4, || format!("{which}: ‖(x1, x2) − reference‖ = {dist:e}"))?;
        details.push(format!(
            "{which}: {} iters, KKT max {:.1e}, dist {dist:.1e}",
            trace.len() - 1,
            pr.max(d1).max(d2)
        ));
    }
    Ok(details.join("; "))
}

fn c7_config_gates(_: &mut Ctx) -> Outcome {
    for g in [1.0, 0.99, 0.0, -2.0, f64::NAN] {
        ensure(BcdConfig::new(g, 10).is_err(), || format!("γ={g} accepted"))?;
    }
    ensure(BcdConfig::new(1.0 + 1e-12, 10).is_ok(), || "γ just above 1 rejected".into())?;
    for t in [0.0, -0.5, 1.618033988749895, 1.6180339887498951, 1.7, 3.0, f64::NAN] {
        match AdmmConfig::new(1.0, t) {
            Ok(_) => return Err(format!("τ={t} accepted")),
            Err(e) => {
                let msg = e.to_string();
                ensure(msg.contains("1.618033988749895"), || format!("τ={t}: message lacks the bound: {msg}"))?;
            }
        }
    }
    ensure(AdmmConfig::new(1.0, 1.618033988749).is_ok(), || "τ just inside the bound rejected".into())?;
    for r in [0.0, -1.0, f64::NAN, f64::INFINITY] {
        ensure(AdmmConfig::new(r, 1.0).is_err(), || format!("ρ={r} accepted"))?;
    }
    let dir = tempfile::TempDir::new().map_err(err)?;
    for (args, needle) in [
        (&["run-bcd", "--builtin", "quadratic", "--gamma", "1"][..], "gamma: must be > 1"),
        (&["run-admm", "--builtin", "consensus-lasso", "--tau", "1.7"][..], "1.618033988749895"),
        (&["run-admm", "--builtin", "consensus-lasso", "--rho", "0"][..], "rho:"),
    ] {
        let o = Command::new(env!("CARGO_BIN_EXE_blockopt"))
            .current_dir(dir.path())
            .env_remove("BLOCKOPT_SEED")
            .args(args)
            .output()
            .map_err(err)?;
        let text = String::from_utf8_lossy(&o.stderr);
        ensure(o.status.code() == Some(2) && text.contains(needle), || format!("{args:?}: {:?} {text}", o.status))?;
    }
    Ok("γ ≤ 1, τ ∉ (0, 1.618033988749895), ρ ≤ 0 rejected by the library and with exit 2 by the CLI".into())
}

fn scalar_atom(a: &Atom, u: f64) -> f64 {
    match a {
        Atom::Zero => 0.0,
        Atom::L1 { weight } => weight * u.abs(),
        Atom::SqL2 { weight } => weight * u * u,
        Atom::IndNonneg => {
            if u >= 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        }
        Atom::IndBox { lo, hi } => {
            if u >= lo[0] && u <= hi[0] {
                0.0
            } else {
                f64::INFINITY
            }
        }
    }
}

/// argmin over the grid x + jΔ of t·a(u) + ½(u − x)², |jΔ| ≤ r.
fn grid_prox(a: &Atom, t: f64, x: f64, step: f64, r: f64) -> f64 {
    let k = (r / step).ceil() as i64;
    let mut best = (f64::INFINITY, x);
    for j in -k..=k {
        let u = x + j as f64 * step;
        let v = t * scalar_atom(a, u) + 0.5 * (u - x) * (u - x);
        if v < best.0 {
            best = (v, u);
        }
    }
    best.1
}

fn c8_oracles(_: &mut Ctx) -> Outcome {
    let mut rng = Rng::new(8);
    let step = 1e-4;
    let atoms = [
        Atom::Zero,
        Atom::L1 { weight: 0.8 },
        Atom::SqL2 { weight: 1.7 },
        Atom::IndNonneg,
        Atom::IndBox { lo: Vector::from_slice(&[-0.7]).unwrap(), hi: Vector::from_slice(&[1.2]).unwrap() },
    ];
    let mut worst_prox = 0.0f64;
    for atom in &atoms {
        for _ in 0..100 {
            let x = rng.uniform(-4.0, 4.0);
            let t = rng.uniform(0.05, 3.0);
            let analytic = prox(atom, t, &Vector::from_slice(&[x]).unwrap()).map_err(err)?.point[0];
            // every prox here moves x by at most |x| + t·weight + box width
            let grid = grid_prox(atom, t, x, step, x.abs() + 2.0 * t + 2.0);
            let d = (analytic - grid).abs();
            worst_prox = worst_prox.max(d);
            ensure(d <= 2.0 * step, || format!("{} t={t} x={x}: {analytic} vs grid {grid}", atom.name()))?;
        }
    }

    let mut parts: Vec<(String, Box<dyn SmoothFn>)> = Vec::new();
    for which in Builtin::ALL {
        match builtin(which, DEFAULT_SEED).map_err(err)? {
            BuiltinProblem::Bcd(b) => {
                let h: std::sync::Arc<dyn SmoothCoupling> = std::sync::Arc::new(b.coupling.clone());
                let (n, m) = h.dims();
                let x = rng.vector_uniform(n, -1.0, 1.0).into_vec();
                let y = rng.vector_uniform(m, -1.0, 1.0).into_vec();
                parts.push((format!("{which}/x"), Box::new(CouplingInX { coupling: h.clone(), y })));
                parts.push((format!("{which}/y"), Box::new(CouplingInY { coupling: h, x })));
            }
            BuiltinProblem::Admm(a) => {
                for i in 0..2 {
                    if let Some(ls) = &a.problem.block(i).smooth {
                        parts.push((format!("{which}/block{i}"), Box::new(LeastSquares::clone(ls))));
                    }
                }
            }
        }
    }
    let h = 1e-5;
    let mut worst_fd = 0.0f64;
    for (name, f) in &parts {
        for _ in 0..3 {
            let x = rng.vector_uniform(f.dim(), -2.0, 2.0).into_vec();
            let g = f.gradient(&x);
            let mut e = 0.0f64;
            for i in 0..x.len() {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[i] += h;
                xm[i] -= h;
                let fd = (f.value(&xp) - f.value(&xm)) / (2.0 * h);
                e = e.max((fd - g[i]).abs());
            }
            let rel = e / g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            worst_fd = worst_fd.max(rel);
            ensure(rel < 1e-6, || format!("{name}: relative FD error {rel:e}"))?;
        }
    }

    let mut worst_adj = 0.0f64;
    for _ in 0..100 {
        let (r, c) = (1 + rng.index(40), 1 + rng.index(40));
        let a = rng.matrix_uniform(r, c);
        let v = rng.vector_uniform(c, -1.0, 1.0);
        let w = rng.vector_uniform(r, -1.0, 1.0);
        let lhs: f64 = a.apply_slice(v.as_slice()).iter().zip(w.iter()).map(|(p, q)| p * q).sum();
        let rhs: f64 = v.iter().zip(a.adjoint_apply_slice(w.as_slice())).map(|(p, q)| p * q).sum();
        let rel = (lhs - rhs).abs() / (a.frobenius_norm() * v.norm() * w.norm());
        worst_adj = worst_adj.max(rel);
        ensure(rel < 1e-12, || format!("adjoint {r}×{c}: relative {rel:e}"))?;
    }
    Ok(format!(
        "prox 5×100 max |analytic − grid| {worst_prox:.1e} ≤ 2e-4; FD on {} smooth parts max rel {worst_fd:.1e}; adjoint 100 triples max rel {worst_adj:.1e}",
        parts.len()
    ))
}

fn c9_kl(ctx: &mut Ctx) -> Outcome {
    let analytic = Desingularizer::new(1.0 / 2f64.sqrt(), 0.5, f64::MAX).map_err(err)?;
    let mut details = Vec::new();
    for (which, gamma, inst, trace, _) in &ctx.bcd {
        let o = BcdOracle::new(inst);
        let pts = trace.points();
        let floor = 1e-12 * (1.0 + inst.psi_star.abs());
        match which {
            Builtin::Quadratic => {
                ensure(o.mu == 1.0 && inst.psi_star == 0.0, || "quadratic should have μ = 1, ψ* = 0".into())?;
                let fit = fit_kl_exponent(&inst.problem, &pts, 0.0, KlWindow::default()).map_err(err)?;
                ensure((fit.theta_hat - 0.5).abs() <= 0.05, || format!("γ={gamma}: θ̂ = {}", fit.theta_hat))?;
                let lib = kl_inequality_along_trace(&inst.problem, &pts, 0.0, &analytic, KlWindow::default()).map_err(err)?;
                ensure(!lib.vacuous && lib.violation_count() == 0, || format!("γ={gamma}: {} violations", lib.violation_count()))?;
                // φ'(gap)·dist = c·gap^{−½}·‖∇ψ‖
                let mut n = 0;
                for r in &trace.records {
                    let (x, y) = (r.z.x.as_slice(), r.z.y.as_slice());
                    let gap = o.psi(x, y);
                    if gap <= floor {
                        continue;
                    }
                    n += 1;
                    let lhs = analytic.c() * gap.powf(-0.5) * o.stationarity(x, y);
                    ensure(lhs >= 1.0 - 1e-8, || format!("γ={gamma}: KL violated at k={}: {lhs}", r.k))?;
                }
                details.push(format!("quadratic γ={gamma}: θ̂={:.3}, {n} points", fit.theta_hat));
            }
            _ => {
                let all = kl_samples(&inst.problem, &pts, inst.psi_star, KlWindow::default()).map_err(err)?;
                let window = KlWindow::resolvable_tail(&all, 0.5, KlWindow::default().gap_floor_rel).map_err(err)?;
                let fit = fit_kl_exponent(&inst.problem, &pts, inst.psi_star, window).map_err(err)?;
                let d = fit.desingularizer(2.0).map_err(err)?;
                let lib = kl_inequality_along_trace(&inst.problem, &pts, inst.psi_star, &d, window).map_err(err)?;
                ensure(!lib.vacuous && lib.violation_count() == 0, || format!("lasso γ={gamma}: {} violations", lib.violation_count()))?;
                let mut n = 0;
                for r in trace.records.iter().filter(|r| r.k >= window.burn_in) {
                    let (x, y) = (r.z.x.as_slice(), r.z.y.as_slice());
                    let gap = o.psi(x, y) - inst.psi_star;
                    if gap <= floor || gap >= d.eta() {
                        continue;
                    }
                    n += 1;
                    let lhs = d.c() * gap.powf(-d.theta()) * o.stationarity(x, y);
                    ensure(lhs >= 1.0 - 1e-8, || format!("lasso γ={gamma}: KL violated at k={}: {lhs}", r.k))?;
                }
                ensure(n > 0, || format!("lasso γ={gamma}: empty tail"))?;
                details.push(format!("lasso γ={gamma}: θ̂={:.3} c={:.3}, {n} tail points", d.theta(), d.c()));
            }
        }
    }
    Ok(format!("0 violations; {}", details.join("; ")))
}

fn c10_determinism(ctx: &mut Ctx) -> Outcome {
    for which in Builtin::ALL {
        let run = || -> Result<(Vec<u8>, Vec<u8>), String> {
            Ok(match builtin(which, DEFAULT_SEED).map_err(err)? {
                BuiltinProblem::Bcd(b) => {
                    let t = run_bcd(&b.problem, &BcdConfig::new(2.0, 1000).map_err(err)?).map_err(err)?;
                    (trace_io::bcd_csv(&t), trace_io::bcd_full_dump(&t))
                }
                BuiltinProblem::Admm(a) => {
                    let t = run_admm(&a.problem, &AdmmConfig::new(1.0, 1.0).map_err(err)?).map_err(err)?;
                    (trace_io::admm_csv(&t), trace_io::admm_full_dump(&t))
                }
            })
        };
        let (a, b) = (run()?, run()?);
        ensure(a == b, || format!("{which}: library traces differ"))?;
    }
    let dirs = [tempfile::TempDir::new().map_err(err)?, tempfile::TempDir::new().map_err(err)?];
    for dir in &dirs {
        for which in Builtin::ALL {
            let sub = match which.algorithm() {
                blockopt_core::problems::Algorithm::Bcd => "run-bcd",
                blockopt_core::problems::Algorithm::Admm => "run-admm",
            };
            let o = Command::new(env!("CARGO_BIN_EXE_blockopt"))
                .current_dir(dir.path())
                .env_remove("BLOCKOPT_SEED")
                .args([sub, "--builtin", which.name(), "--full-dump"])
                .output()
                .map_err(err)?;
            ensure(o.status.success(), || format!("{which}: {}", String::from_utf8_lossy(&o.stderr)))?;
        }
    }
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).map_err(err);
    for which in Builtin::ALL {
        for f in [format!("{}.trace.csv", which.name()), format!("{}.trace.csv.full.csv", which.name())] {
            ensure(read(dirs[0].path(), &f)? == read(dirs[1].path(), &f)?, || format!("{f} differs between CLI runs"))?;
        }
    }
    let elapsed = ctx.elapsed_1_to_9.ok_or("criteria 1–9 were not timed")?;
    ensure(elapsed < Duration::from_secs(180), || format!("criteria 1–9 took {elapsed:?}"))?;
    Ok(format!("6 built-ins byte-identical via library and CLI; criteria 1–9 took {elapsed:.1?}"))
}

fn panic_text(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panic".into())
}

fn main() {
    type Criterion = fn(&mut Ctx) -> Outcome;
    let criteria: [(&str, Criterion); 10] = [
        ("sufficient descent", c1_sufficient_descent),
        ("subgradient bound", c2_subgradient_bound),
        ("finite length and criticality", c3_finite_length),
        ("ADMM Φ descent", c4_phi_descent),
        ("u/v membership", c5_uv_membership),
        ("KKT convergence", c6_kkt_convergence),
        ("config gates", c7_config_gates),
        ("oracle equivalence", c8_oracles),
        ("KL diagnostics", c9_kl),
        ("determinism", c10_determinism),
    ];
    let mut ctx = Ctx::default();
    let start = Instant::now();
    let mut failed = 0;
    println!();
    for (i, (name, f)) in criteria.iter().enumerate() {
        if i == 9 {
            ctx.elapsed_1_to_9 = Some(start.elapsed());
        }
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| f(&mut ctx))).unwrap_or_else(|p| Err(panic_text(p)));
        let took = t0.elapsed();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name} [{took:.2?}]: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name} [{took:.2?}]: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed in {:.1?}", criteria.len() - failed, start.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
