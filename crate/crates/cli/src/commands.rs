use std::path::Path;

use ruelle::apriori::estimate_growth;
use ruelle::gibbs::{invariance_gap, iterate_to_gibbs, mixing_correlation, support_probe, EmpiricalMeasure, GibbsSampler, TraceConfig};
use ruelle::oracle::FiniteInstance;
use ruelle::potential::{audit_points, is_normalized, NormalizedPotential, Observable, Potential};
use ruelle::transfer::{EigenPair, GridSolver};
use ruelle::wasserstein::{auto_scale, c_contr, kantorovich_lb, rn_profile, tails_contraction_factor, w1, ContractionSetup, WassersteinError, EXACT_THRESHOLD};
use ruelle::{AprioriMeasure, MetricSpec, WeightSequence};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, PairSpec};
use crate::report::{read_cloud, Envelope, Writer};
use crate::CliError;

pub struct Ctx {
    pub cfg: ExperimentConfig,
    pub sha256: String,
    pub overrides: Value,
    pub writer: Writer,
}

/// Outcome of a subcommand: its report and whether a premise failed.
pub struct Outcome {
    pub report: Value,
    pub premise_violated: bool,
}

impl Outcome {
    fn ok(report: Value) -> Self {
        Outcome {
            report,
            premise_violated: false,
        }
    }
}

trait Lib<T> {
    fn lib(self) -> Result<T, CliError>;
}

impl<T, E: std::fmt::Display> Lib<T> for Result<T, E> {
    fn lib(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::Library(e.to_string()))
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

impl Ctx {
    fn seed(&self) -> Result<u64, CliError> {
        self.cfg.gibbs.seed.ok_or_else(|| CliError::ConfigInvalid {
            path: "gibbs.seed".into(),
            message: "a seed is required for stochastic subcommands (config or --seed)".into(),
        })
    }

    fn weights(&self) -> Result<WeightSequence, CliError> {
        WeightSequence::from_spec(&self.cfg.weights).map_err(|e| CliError::ConfigInvalid {
            path: "weights".into(),
            message: e.to_string(),
        })
    }

    fn apriori(&self) -> Result<AprioriMeasure, CliError> {
        AprioriMeasure::from_spec(&self.cfg.apriori).map_err(|e| CliError::ConfigInvalid {
            path: "apriori".into(),
            message: e.to_string(),
        })
    }

    fn potential(&self, m: &AprioriMeasure) -> Result<Potential, CliError> {
        match &self.cfg.potential {
            None => Ok(Potential::zero()),
            Some(spec) => Potential::from_spec(spec, self.cfg.space, m).map_err(|e| CliError::ConfigInvalid {
                path: "potential".into(),
                message: e.to_string(),
            }),
        }
    }

    fn solve(&self, p: &Potential, m: &AprioriMeasure, w: &WeightSequence) -> Result<EigenPair, CliError> {
        let s = &self.cfg.solver;
        let solver = GridSolver::for_potential(p, self.cfg.space, m, w, s).lib()?;
        solver.eigenpair(&s.s_schedule, s.tol, s.max_iters).lib()
    }

    /// `Ā` from the eigenpair, or `A` itself when declared normalized.
    fn normalized(&self, p: &Potential, m: &AprioriMeasure, w: &WeightSequence) -> Result<(NormalizedPotential, Option<EigenPair>), CliError> {
        if self.cfg.assume_normalized {
            return Ok((NormalizedPotential::identity(p.clone(), self.cfg.space, w.clone()), None));
        }
        let pair = self.solve(p, m, w)?;
        let abar = NormalizedPotential::new(p.clone(), self.cfg.space, &pair.psi(), pair.lambda, w.clone()).lib()?;
        Ok((abar, Some(pair)))
    }

    /// Declared `Lip_{Ā, D^α}`, or a bound from `A` and the weights:
    /// `Ā = A + u − u∘L − ln λ` with `Hol(u) ≤ d · Hol(A)` and `‖L‖ ≤ c'`.
    fn lip_abar(&self, p: &Potential, abar: &NormalizedPotential, w: &WeightSequence) -> Result<f64, CliError> {
        if let Some(l) = self.cfg.contract.lip_abar {
            return Ok(l);
        }
        let alpha = self.cfg.metric.alpha;
        let hol = p.holder_const(alpha);
        if abar.log_psi().rank() == 0 || hol == 0.0 {
            return Ok(hol);
        }
        let d = self.d_sum(w)?;
        let c_prime = w.bounds().1;
        Ok(hol * (1.0 + d * (1.0 + c_prime.powf(alpha))))
    }

    fn d_sum(&self, w: &WeightSequence) -> Result<f64, CliError> {
        w.d_series(self.cfg.metric.alpha, w.horizon())
            .ok_or_else(|| CliError::Premise("Σ d_n^(-α) is not certified finite for these weights".into()))
    }

    /// Scale `a` and its provenance.
    fn scale(&self, lip: f64, w: &WeightSequence) -> Result<(f64, Value), CliError> {
        let d = self.d_sum(w)?;
        let c = c_contr(lip, d);
        let a = match self.cfg.metric.a.fixed() {
            Some(a) => a,
            None => auto_scale(lip, d),
        };
        Ok((
            a,
            json!({
                "a": a,
                "rule": if self.cfg.metric.a.fixed().is_some() { "fixed" } else { "auto: max{8 c_contr/3, 1}" },
                "alpha": self.cfg.metric.alpha,
                "lip_abar": lip,
                "d_sum": d,
                "c_contr": c,
            }),
        ))
    }

    pub fn emit(&self, subcommand: &str, seed: Option<u64>, result: &Value) -> Result<(), CliError> {
        let env = Envelope {
            subcommand,
            version: crate::report::VERSION,
            config_sha256: &self.sha256,
            seed,
            overrides: &self.overrides,
            timestamp: self.writer.timestamp(),
            result,
        };
        self.writer.json(&format!("{subcommand}.json"), &env)?;
        let mut s = serde_json::to_string_pretty(&env).map_err(|e| CliError::Io(e.to_string()))?;
        s.push('\n');
        print!("{s}");
        Ok(())
    }
}

pub fn classify(ctx: &Ctx) -> Result<Outcome, CliError> {
    let w = ctx.weights()?;
    let h = ctx.cfg.classify.horizon;
    let alpha = ctx.cfg.metric.alpha;
    let report = w.report(alpha, ctx.cfg.space.exponent(), h);
    Ok(Outcome::ok(json!({
        "weights": ctx.cfg.weights,
        "space": ctx.cfg.space,
        "exact_closed_form": w.is_exact(),
        "summability": w.summability(alpha, h),
        "report": report,
    })))
}

fn eigen_json(pair: &EigenPair) -> Value {
    let mut v = to_value(pair);
    v["grid"] = to_value(&pair.log_psi.metadata());
    v
}

fn dump_grid(ctx: &Ctx, name: &str, pair: &EigenPair) -> Result<Value, CliError> {
    if !ctx.cfg.outputs.wants("bin") {
        return Ok(Value::Null);
    }
    let mut bytes = Vec::new();
    pair.psi().write_binary(&mut bytes).map_err(|e| CliError::Io(e.to_string()))?;
    ctx.writer.write_atomic(&format!("{name}.bin"), &bytes)?;
    ctx.writer.json(&format!("{name}.meta.json"), &pair.psi().metadata())?;
    Ok(json!({ "binary": format!("{name}.bin"), "metadata": format!("{name}.meta.json") }))
}

pub fn eigen(ctx: &Ctx) -> Result<Outcome, CliError> {
    let (w, m) = (ctx.weights()?, ctx.apriori()?);
    let p = ctx.potential(&m)?;
    let s = &ctx.cfg.solver;
    let solver = GridSolver::for_potential(&p, ctx.cfg.space, &m, &w, s).lib()?;
    let pair = solver.eigenpair(&s.s_schedule, s.tol, s.max_iters).lib()?;
    let power = match solver.power_iterate(s.max_iters, s.tol) {
        Ok(pw) => json!({
            "lambda": pw.lambda,
            "iterations": pw.iterations,
            "lambda_gap": (pw.lambda - pair.lambda).abs(),
            "psi_gap": pw.log_psi.values().iter().zip(pair.log_psi.values()).map(|(a, b)| (a.exp() - b.exp()).abs()).fold(0.0, f64::max),
        }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let files = dump_grid(ctx, "psi", &pair)?;
    Ok(Outcome::ok(json!({
        "eigenpair": eigen_json(&pair),
        "power_iteration": power,
        "first_half_width": s.grid.first_half_width(&m),
        "psi_dump": files,
    })))
}

pub fn normalize(ctx: &Ctx) -> Result<Outcome, CliError> {
    let (w, m) = (ctx.weights()?, ctx.apriori()?);
    let p = ctx.potential(&m)?;
    let pair = ctx.solve(&p, &m, &w)?;
    let abar = NormalizedPotential::new(p.clone(), ctx.cfg.space, &pair.psi(), pair.lambda, w.clone()).lib()?;
    let depth = pair.log_psi.rank() + 2;
    let pts = audit_points(&m, &w, ctx.cfg.solver.audit_points.max(2), depth, 0x5EED);
    let residual = abar.residual(&m, &pts);
    let base_residual = is_normalized(&p.on(ctx.cfg.space), &w, &m, &pts);
    let variation = p.summable_variation_check(ctx.cfg.space, 8, 2000, 0x7A1, 1e3);
    let files = dump_grid(ctx, "log_psi_exp", &pair)?;
    Ok(Outcome::ok(json!({
        "eigenpair": eigen_json(&pair),
        "normalized_residual": residual,
        "unnormalized_residual": base_residual,
        "audit_points": pts.len(),
        "abar_inf_bound": abar.inf_bound(),
        "variation": variation,
        "psi_dump": files,
    })))
}

pub fn gibbs(ctx: &Ctx) -> Result<Outcome, CliError> {
    let seed = ctx.seed()?;
    let (w, m) = (ctx.weights()?, ctx.apriori()?);
    let p = ctx.potential(&m)?;
    let g = &ctx.cfg.gibbs;
    let space = ctx.cfg.space;
    let (abar, pair) = ctx.normalized(&p, &m, &w)?;
    let lip = ctx.lip_abar(&p, &abar, &w)?;
    let (a, scale) = ctx.scale(lip, &w)?;
    let metric = MetricSpec::Bounded {
        a,
        alpha: ctx.cfg.metric.alpha,
    };
    let sampler = GibbsSampler::new(&abar, &m, &w, space, g.candidates, g.max_depth, seed, g.normalization_tol).lib()?;
    let nu0 = EmpiricalMeasure::dirac(&[], g.particles, space);
    let nu1 = EmpiricalMeasure::uniform_box(g.particles, 4, 3.0, space, seed ^ 0x0DD_BA11);
    let trace = TraceConfig {
        metric,
        subsample: g.trace_subsample,
        every: g.trace_every,
    };
    let run = iterate_to_gibbs(&sampler, &nu0, Some(&nu1), g.iters, trace).lib()?;
    let sub = g.trace_subsample;
    // same-law reference: a third chain from δ_0 with its own streams
    let reference = sampler.reseeded(seed.wrapping_add(0x9E37_79B9_7F4A_7C15)).push_n(&nu0, g.iters);
    let floor = ruelle::wasserstein::w1_exact(run.cloud.head(sub), reference.head(sub), metric, space).lib()?.cost;
    let gap = invariance_gap(&run.cloud, &w, metric, sub).lib()?;
    let f = |x: &[f64]| x.first().copied().unwrap_or(0.0).tanh();
    let mixing: Vec<(usize, f64)> = (0..=10).map(|n| (n, mixing_correlation(&run.cloud, &w, &f, &f, n))).collect();
    let probe = support_probe(&run.cloud, &[0.0], 1.0, &m, abar.inf_bound());
    let (mean1, se1) = run.cloud.mean_of(&|x: &[f64]| x[0]);
    let stds: Vec<f64> = (0..3)
        .map(|k| {
            let (mu, _) = run.cloud.mean_of(&|x: &[f64]| x.get(k).copied().unwrap_or(0.0));
            let (m2, _) = run.cloud.mean_of(&|x: &[f64]| x.get(k).copied().unwrap_or(0.0).powi(2));
            (m2 - mu * mu).max(0.0).sqrt()
        })
        .collect();
    let mut files = vec![];
    if ctx.cfg.outputs.wants("jsonl") {
        ctx.writer.jsonl("cloud.jsonl", &run.cloud.particles)?;
        files.push("cloud.jsonl");
        if let Some(c) = &run.cloud_prime {
            ctx.writer.jsonl("cloud_prime.jsonl", &c.particles)?;
            files.push("cloud_prime.jsonl");
        }
    }
    Ok(Outcome::ok(json!({
        "metric": scale,
        "particles": g.particles,
        "iters": g.iters,
        "candidates": g.candidates,
        "lambda": pair.as_ref().map(|p| p.lambda),
        "run": run,
        "noise_floor": floor,
        "invariance_gap": gap,
        "uniqueness_gap": run.pair_trace.last().map(|t| t.1),
        "mixing_trace": mixing,
        "support_probe": probe,
        "coordinate_std": stds,
        "first_coordinate_mean": [mean1, se1],
        "files": files,
    })))
}

pub fn wasserstein(ctx: &Ctx, left: &Path, right: &Path) -> Result<Outcome, CliError> {
    let seed = ctx.seed()?;
    let (w, m) = (ctx.weights()?, ctx.apriori()?);
    let p = ctx.potential(&m)?;
    let space = ctx.cfg.space;
    let (abar, _) = ctx.normalized(&p, &m, &w)?;
    let lip = ctx.lip_abar(&p, &abar, &w)?;
    let (a, scale) = ctx.scale(lip, &w)?;
    let metric = MetricSpec::Bounded {
        a,
        alpha: ctx.cfg.metric.alpha,
    };
    let mu = EmpiricalMeasure::new(read_cloud(left)?, space);
    let nu = EmpiricalMeasure::new(read_cloud(right)?, space);
    let plan = w1(&mu, &nu, metric, EXACT_THRESHOLD).lib()?;
    // distances to fixed anchors are 1-Lipschitz for any metric
    let anchors: Vec<Vec<f64>> = [mu.particles.first(), nu.particles.first()].into_iter().flatten().cloned().chain([vec![]]).collect();
    let tests: Vec<Box<dyn Observable>> = anchors
        .into_iter()
        .map(|z| Box::new(move |x: &[f64]| metric.eval(space, x, &z)) as Box<dyn Observable>)
        .collect();
    let refs: Vec<&dyn Observable> = tests.iter().map(|b| b.as_ref()).collect();
    let lb = kantorovich_lb(&mu, &nu, metric, &refs, 500, seed).lib()?;
    Ok(Outcome::ok(json!({
        "metric": scale,
        "left": { "path": left.display().to_string(), "particles": mu.len() },
        "right": { "path": right.display().to_string(), "particles": nu.len() },
        "plan": plan,
        "kantorovich_lower_bound": lb,
    })))
}

pub fn contract(ctx: &Ctx, local: bool, global: bool) -> Result<Outcome, CliError> {
    let seed = ctx.seed()?;
    let (w, m) = (ctx.weights()?, ctx.apriori()?);
    let p = ctx.potential(&m)?;
    let g = &ctx.cfg.gibbs;
    let (abar, _) = ctx.normalized(&p, &m, &w)?;
    let lip = ctx.lip_abar(&p, &abar, &w)?;
    let (_, scale) = ctx.scale(lip, &w)?;
    let sampler = GibbsSampler::new(&abar, &m, &w, ctx.cfg.space, g.candidates, g.max_depth, seed, g.normalization_tol).lib()?;
    let setup = ContractionSetup {
        sampler: &sampler,
        lip_abar: lip,
        alpha: ctx.cfg.metric.alpha,
        a: ctx.cfg.metric.a.fixed(),
        particles: ctx.cfg.contract.particles,
    };
    let mut violated = false;
    let mut run = |pairs: &[PairSpec], is_local: bool| -> Result<Vec<Value>, CliError> {
        let mut out = vec![];
        for pair in pairs {
            let r = if is_local {
                setup.local(&pair.x, &pair.y, pair.n)
            } else {
                setup.global(&pair.x, &pair.y, pair.n)
            };
            out.push(match r {
                Ok(rep) => json!({ "pair": pair, "report": rep }),
                Err(WassersteinError::PremiseViolated(msg)) => {
                    violated = true;
                    json!({ "pair": pair, "premise_violation": msg })
                }
                Err(e) => return Err(CliError::Library(e.to_string())),
            });
        }
        Ok(out)
    };
    let local_reports = if local { Some(run(&ctx.cfg.contract.local, true)?) } else { None };
    let global_reports = if global { Some(run(&ctx.cfg.contract.global, false)?) } else { None };
    let all_pass = local_reports
        .iter()
        .chain(&global_reports)
        .flatten()
        .all(|r| r["report"]["passes"].as_bool() == Some(true));
    Ok(Outcome {
        report: json!({
            "metric": scale,
            "particles": ctx.cfg.contract.particles,
            "normalization_residual": sampler.residual(),
            "local": local_reports,
            "global": global_reports,
            "passes": all_pass,
        }),
        premise_violated: violated,
    })
}

pub fn tails(ctx: &Ctx) -> Result<Outcome, CliError> {
    let (w, m) = (ctx.weights()?, ctx.apriori()?);
    let t = &ctx.cfg.tails;
    let alpha = ctx.cfg.metric.alpha;
    let adapted = m.adapted_tails_check(&w, ctx.cfg.space, t.epsilon, t.horizon);
    let fast = m.fast_tail_criteria(&w, ctx.cfg.space).map_err(|e| e.to_string());
    let mut violated = false;
    let mut note = |r: Result<Value, WassersteinError>| match r {
        Ok(v) => v,
        Err(e) => {
            violated |= matches!(e, WassersteinError::PremiseViolated(_));
            json!({ "error": e.to_string() })
        }
    };
    let a = ctx.cfg.metric.a.fixed().unwrap_or(1.0);
    let factor = t
        .gamma
        .map(|gamma| note(tails_contraction_factor(gamma, &w, alpha, a, t.n).map(|f| json!(f))));
    let profile = if t.ts.is_empty() {
        None
    } else {
        Some(note(rn_profile(&w, alpha, a, t.n, &t.ts).map(|v| json!(v))))
    };
    Ok(Outcome {
        report: json!({
            "adapted_tails": adapted,
            "fast_criteria": match fast { Ok(v) => to_value(&v), Err(e) => json!({ "error": e }) },
            "d_growth": estimate_growth(&w),
            "a": a,
            "n": t.n,
            "contraction_factor": factor,
            "rn_profile": profile,
        }),
        premise_violated: violated,
    })
}

pub fn oracle_compare(ctx: &Ctx) -> Result<Outcome, CliError> {
    let (w, m) = (ctx.weights()?, ctx.apriori()?);
    let p = ctx.potential(&m)?;
    let rank = p.rank().ok_or_else(|| CliError::ConfigInvalid {
        path: "potential".into(),
        message: "the oracle needs a finite-rank potential".into(),
    })?;
    let bound = p.on(ctx.cfg.space);
    let inst = FiniteInstance::build(&w, &m, &bound, rank).map_err(|e| CliError::ConfigInvalid {
        path: "apriori".into(),
        message: e.to_string(),
    })?;
    let exact = inst.exact_eigen(1e-14).lib()?;
    let s = &ctx.cfg.solver;
    let solver = GridSolver::new(p.on(ctx.cfg.space), rank, &m, &w, &s.grid).lib()?;
    let disc = solver.eigenpair(&s.s_schedule, s.tol, s.max_iters).lib()?;
    let power = solver.power_iterate(s.max_iters, s.tol.min(1e-13)).lib()?;
    let psi = disc.psi();
    let origin = &inst.collocation()[inst.origin_state()];
    let scale = psi.eval(origin);
    let psi_gap = inst
        .collocation()
        .iter()
        .zip(&exact.psi)
        .map(|(x, e)| ((psi.eval(x) / scale - e) / e).abs())
        .fold(0.0, f64::max);
    let lambda_gap = (disc.lambda - exact.lambda).abs();
    let power_gap = (power.lambda - exact.lambda).abs();
    Ok(Outcome::ok(json!({
        "states": inst.states(),
        "depth": inst.depth(),
        "exact": { "lambda": exact.lambda, "bracket": exact.bracket, "iterations": exact.iterations },
        "discounted": { "lambda": disc.lambda, "lambda_gap": lambda_gap, "kappa_trace": disc.kappa_trace },
        "power": { "lambda": power.lambda, "lambda_gap": power_gap },
        "psi_max_relative_gap": psi_gap,
        "agree": lambda_gap <= 1e-8 && power_gap <= 1e-8 && psi_gap <= 1e-6,
    })))
}
