use std::time::Instant;

use rand::Rng as _;
use serde::Serialize;
use serde_json::{json, Value};
use waylab::bounds::{
    identity_reports, inequality_reports, BoundReport, InputsDigest, Relation, BOUND_TOL,
};
use waylab::cnot::{
    gate_fidelity, measurement_view, noise_fidelity_link_with, GateImplementation, PsiChoice,
    SearchConfig,
};
use waylab::conservation::{commutant_basis, require_conserving, ConservationLaw};
use waylab::gates::{pauli, Pauli};
use waylab::measurement::{
    certification_states, Certificate, CertifyConfig, IndirectMeasurementModel,
};
use waylab::sampling;
use waylab::scenarios::{
    build_boson, build_spin, ceiling_boson, coupling_implementation, optimize_fidelity,
    random_conserving_case, sample_boson_implementation, sigma_l3_bound_check, sum_x,
    way_positive_control, Ceiling, OptimizeConfig, Problem,
};
use waylab::{HilbertSpec, StateVector};

use crate::config::{
    self, BosonConfig, CasesConfig, ControlConfig, EvalConfig, ScenarioConfig, ScenarioKind,
};
use crate::report::{csv_path, max_residual, min_slack, Outcome, Report};
use crate::{Cli, CliError, Command};

/// Largest spin register the optimizer accepts.
const MAX_SPIN_QUBITS: usize = 5;
/// Largest total dimension of a bosonic run.
const MAX_BOSON_DIM: usize = 128;

struct Ctx<'a> {
    cli: &'a Cli,
    tol: f64,
    started: Instant,
}

impl Ctx<'_> {
    fn seed(&self, fallback: Option<u64>) -> Result<u64, CliError> {
        self.cli.seed.or(fallback).ok_or_else(|| {
            CliError::Usage(format!(
                "{} draws random inputs and needs --seed",
                self.cli.command.name()
            ))
        })
    }

    fn certify(&self) -> CertifyConfig {
        CertifyConfig {
            tol: self.tol,
            seed: self.cli.seed.unwrap_or(CertifyConfig::default().seed),
            ..CertifyConfig::default()
        }
    }

    fn search(&self) -> SearchConfig {
        let mut cfg = SearchConfig {
            record_trace: !self.cli.quiet,
            ..SearchConfig::default()
        };
        if let Some(r) = self.cli.restarts {
            cfg.restarts = r;
        }
        cfg
    }

    fn finish(
        &self,
        parameters: Value,
        summary: Value,
        records: Vec<BoundReport>,
        violation: bool,
    ) -> Result<Outcome, CliError> {
        let status = if violation {
            Outcome::Violation
        } else {
            Outcome::Pass
        };
        let command = self.cli.command.name();
        let report = Report::new(
            command,
            parameters,
            status,
            summary,
            records,
            self.started.elapsed().as_secs_f64(),
        );
        report.write(self.cli.out.as_deref())?;
        if !self.cli.quiet {
            let verdict = match status {
                Outcome::Pass => "pass",
                Outcome::Violation => "VIOLATION",
            };
            eprintln!(
                "{command}: {verdict} ({} records, {:.2}s)",
                report.records.len(),
                report.header.wall_time_s
            );
        }
        Ok(status)
    }
}

pub fn dispatch(cli: &Cli) -> Result<Outcome, CliError> {
    let tol = cli.tol.unwrap_or(BOUND_TOL);
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(CliError::Usage(format!(
            "--tol must be a non-negative number, got {tol}"
        )));
    }
    if cli.restarts == Some(0) && cli.command == Command::Optimize {
        return Err(CliError::Usage("--restarts must be positive".into()));
    }
    let ctx = Ctx {
        cli,
        tol,
        started: Instant::now(),
    };
    let path = cli.config.as_deref();
    match cli.command {
        Command::VerifyIdentities => verify_identities(&ctx, config::load(path)?),
        Command::CheckBounds => check_bounds(&ctx, config::load(path)?),
        Command::EvalImpl => eval_impl(&ctx, config::load(path)?),
        Command::Optimize => optimize(&ctx, config::load(path)?),
        Command::BosonCheck => boson_check(&ctx, config::load(path)?),
        Command::PositiveControl => positive_control(&ctx, config::load(path)?),
    }
}

type Case = (IndirectMeasurementModel, ConservationLaw, Vec<StateVector>);

/// Explicit cases from the config, or `count` seeded random ones.
fn cases(ctx: &Ctx, cfg: CasesConfig) -> Result<(Value, Vec<Case>), CliError> {
    if !cfg.cases.is_empty() {
        let params = json!({"source": "config", "cases": cfg.cases.len(), "tol": ctx.tol});
        let cases = cfg
            .cases
            .into_iter()
            .map(|c| {
                let psi = if c.psi.is_empty() {
                    certification_states(c.model.spec().object_dim(), 0, 0)
                } else {
                    c.psi
                };
                (c.model, c.law, psi)
            })
            .collect();
        return Ok((params, cases));
    }
    let seed = ctx.seed(None)?;
    let params = json!({"source": "random", "count": cfg.count, "seed": seed, "tol": ctx.tol});
    let cases = (0..cfg.count as u64)
        .map(|i| {
            let case = random_conserving_case(seed.wrapping_add(i))?;
            Ok((case.model, case.law, vec![case.psi]))
        })
        .collect::<Result<_, CliError>>()?;
    Ok((params, cases))
}

fn count_failures(records: &[BoundReport], tol: f64) -> usize {
    records.iter().filter(|r| !r.passes(tol)).count()
}

fn verify_identities(ctx: &Ctx, cfg: CasesConfig) -> Result<Outcome, CliError> {
    let (params, cases) = cases(ctx, cfg)?;
    let mut records = Vec::new();
    for (model, law, _) in &cases {
        records.extend(identity_reports(model, law)?);
    }
    let failures = count_failures(&records, ctx.tol);
    let summary = json!({
        "cases": cases.len(),
        "max_residual": max_residual(&records),
        "violations": failures,
    });
    ctx.finish(params, summary, records, failures > 0)
}

fn check_bounds(ctx: &Ctx, cfg: CasesConfig) -> Result<Outcome, CliError> {
    let (params, cases) = cases(ctx, cfg)?;
    let mut records = Vec::new();
    for (model, law, states) in &cases {
        for psi in states {
            records.extend(inequality_reports(model, law, psi)?);
        }
    }
    let failures = count_failures(&records, ctx.tol);
    let summary = json!({
        "cases": cases.len(),
        "min_slack": min_slack(&records),
        "violations": failures,
    });
    ctx.finish(params, summary, records, failures > 0)
}

fn certificate_json(c: &Certificate) -> Value {
    json!({
        "holds": c.holds,
        "max_value": c.max_value,
        "checked": c.checked,
        "witness": c.witness,
    })
}

fn eval_impl(ctx: &Ctx, cfg: EvalConfig) -> Result<Outcome, CliError> {
    let imp = &cfg.implementation;
    if let Some(law) = &cfg.law {
        if law.spec().factor_dims() != imp.spec().factor_dims() {
            return Err(CliError::Usage(
                "law and implementation live on different spaces".into(),
            ));
        }
        require_conserving(imp.unitary(), law)?;
    }
    let search = ctx.search();
    let fidelity = gate_fidelity(imp, &search);
    let view = measurement_view(imp)?;
    let certify = ctx.certify();
    let precise = view.is_precise(&certify)?;
    let nondisturbing = view.is_nondisturbing(&certify)?;

    let mut per_psi = Vec::new();
    let mut records = Vec::new();
    for &psi in &cfg.psi {
        let state = psi.state();
        let mut entry = json!({
            "psi": psi,
            "error": view.rms_error(&state)?,
            "disturbance": view.rms_disturbance(&state)?,
        });
        if let Some(law) = &cfg.law {
            let link = noise_fidelity_link_with(imp, law, psi, fidelity.gate_fidelity)?;
            entry["sigma_l3"] = json!(link.sigma_l3);
            entry["ceiling"] = json!(link.ceiling);
            records.extend(link.reports);
        }
        per_psi.push(entry);
    }
    let failures = count_failures(&records, ctx.tol);
    let params = json!({
        "restarts": search.restarts,
        "certification_seed": certify.seed,
        "tol": ctx.tol,
        "law": cfg.law.is_some(),
    });
    let summary = json!({
        "fidelity": fidelity,
        "f2": fidelity.gate_fidelity.powi(2),
        "precise": certificate_json(&precise),
        "nondisturbing": certificate_json(&nondisturbing),
        "states": per_psi,
        "violations": failures,
    });
    ctx.finish(params, summary, records, failures > 0)
}

fn optimize(ctx: &Ctx, cfg: ScenarioConfig) -> Result<Outcome, CliError> {
    let seed = ctx.seed(cfg.opt.seed)?;
    let problem = match cfg.kind {
        ScenarioKind::Spin => {
            if cfg.n > MAX_SPIN_QUBITS {
                return Err(CliError::Usage(format!(
                    "spin optimization supports at most {MAX_SPIN_QUBITS} qubits, got {}",
                    cfg.n
                )));
            }
            Problem::spin(&build_spin(cfg.n)?)?
        }
        ScenarioKind::Boson => {
            let scenario = build_boson(cfg.nbar, cfg.tail_tol)?;
            check_boson_dim(scenario.spec.dim())?;
            Problem::boson(&scenario)?
        }
        ScenarioKind::ZControl => Problem::z_control()?,
    };
    let mut opt = OptimizeConfig {
        seed,
        ..OptimizeConfig::default()
    };
    if let Some(r) = ctx.cli.restarts.or(cfg.opt.restarts) {
        opt.restarts = r;
    }
    if let Some(m) = cfg.opt.max_iter {
        opt.max_iter = m;
    }
    if let Some(r) = cfg.opt.refine_iter {
        opt.refine_iter = r;
    }
    if opt.restarts == 0 {
        return Err(CliError::Usage("restarts must be positive".into()));
    }

    let mut run = optimize_fidelity(&problem, &opt)?;
    let digest = InputsDigest::new()
        .tag(&run.label)
        .law(&problem.law)
        .scalar(seed as f64)
        .finish();
    let mut records = Vec::new();
    if let Some(ceiling) = run.ceiling {
        let relation = match problem.ceiling {
            Ceiling::SigmaForm => Relation::FidelityCeiling,
            _ => Relation::QubitCeiling,
        };
        records.push(BoundReport::inequality(
            relation,
            run.best_f2,
            ceiling,
            &digest,
        ));
    }
    let violation = !run.audit.violations.is_empty() || count_failures(&records, ctx.tol) > 0;
    if ctx.cli.quiet {
        run.trace.clear();
    }

    let elapsed = ctx.started.elapsed().as_secs_f64();
    if let Some(out) = &ctx.cli.out {
        #[derive(Serialize)]
        struct Row<'a> {
            scenario: &'a str,
            ceiling: Option<f64>,
            best_f2: f64,
            gap: Option<f64>,
            evaluations: usize,
            wall_time_s: f64,
        }
        let mut w = csv::Writer::from_path(csv_path(out, "-summary"))?;
        w.serialize(Row {
            scenario: &run.label,
            ceiling: run.ceiling,
            best_f2: run.best_f2,
            gap: run.gap,
            evaluations: run.evaluations,
            wall_time_s: elapsed,
        })?;
        w.flush()?;
    }
    let params = json!({
        "kind": cfg.kind_name(),
        "n": cfg.n,
        "nbar": cfg.nbar,
        "tail_tol": cfg.tail_tol,
        "seed": seed,
        "restarts": opt.restarts,
        "max_iter": opt.max_iter,
        "refine_iter": opt.refine_iter,
        "parameters": problem.parameter_count(),
        "tol": ctx.tol,
    });
    ctx.finish(
        params,
        serde_json::to_value(&run).expect("run serializes"),
        records,
        violation,
    )
}

fn check_boson_dim(dim: usize) -> Result<(), CliError> {
    if dim > MAX_BOSON_DIM {
        return Err(CliError::Usage(format!(
            "bosonic space of dimension {dim} exceeds the supported {MAX_BOSON_DIM}"
        )));
    }
    Ok(())
}

/// Relations whose failure is a violation of a proven chain; the others
/// are approximate claims whose failures are recorded as findings.
fn is_rigorous(r: Relation) -> bool {
    matches!(
        r,
        Relation::SquaredNoise | Relation::FidelityNoise | Relation::FidelityCeiling
    )
}

fn boson_check(ctx: &Ctx, cfg: BosonConfig) -> Result<Outcome, CliError> {
    let (lo, hi) = cfg.strength;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(CliError::Usage(format!(
            "strength range ({lo}, {hi}) is empty"
        )));
    }
    let seed = if cfg.samples > 0 {
        Some(ctx.seed(None)?)
    } else {
        ctx.cli.seed
    };
    let mut rng = sampling::rng(seed.unwrap_or(0));
    let search = SearchConfig {
        record_trace: false,
        ..ctx.search()
    };

    let mut records = Vec::new();
    let mut scenarios = Vec::new();
    let mut samples = Vec::new();
    for &nbar in &cfg.nbar {
        let scenario = build_boson(nbar, cfg.tail_tol)?;
        check_boson_dim(scenario.spec.dim())?;
        let basis = commutant_basis(&scenario.law)?;
        let mut imps: Vec<(String, Option<f64>, GateImplementation)> = Vec::new();
        for k in 0..cfg.samples {
            let strength = rng.random_range(lo..hi);
            let imp = sample_boson_implementation(&scenario, &basis, &mut rng, strength)?;
            imps.push((format!("random-{k}"), Some(strength), imp));
        }
        for (k, c) in cfg.couplings.iter().enumerate() {
            imps.push((
                format!("coupling-{k}"),
                None,
                coupling_implementation(&scenario, c)?,
            ));
        }

        let mut counts = std::collections::BTreeMap::<&str, [usize; 2]>::new();
        for (origin, strength, imp) in &imps {
            let f = gate_fidelity(imp, &search).gate_fidelity;
            let f2 = f * f;
            let link = noise_fidelity_link_with(imp, &scenario.law, PsiChoice::PlusI, f)?;
            let sigma = sigma_l3_bound_check(imp, &scenario, PsiChoice::PlusI)?;
            let coherent = ceiling_boson(sigma.mean_n);
            let digest = link.reports[0].digest.clone();
            let mut these: Vec<BoundReport> = link.reports.to_vec();
            these.extend(sigma.reports.iter().cloned());
            these.push(BoundReport::inequality(
                Relation::CoherentCeiling,
                f2,
                coherent,
                &digest,
            ));
            for r in &these {
                counts.entry(r.relation.name()).or_default()[usize::from(!r.passes(ctx.tol))] += 1;
            }
            samples.push(json!({
                "nbar": nbar,
                "origin": origin,
                "strength": strength,
                "digest": digest,
                "gate_fidelity": f,
                "f2": f2,
                "sigma_l3": sigma.sigma_l3,
                "sigma_ceiling": link.ceiling,
                "coherent_ceiling": coherent,
                "mean_n": sigma.mean_n,
                "mean_n_after": sigma.mean_n_after,
                "delta_n_after": sigma.delta_n_after,
                "poisson_deviation": sigma.poisson_deviation,
            }));
            records.extend(these);
        }
        let counts: serde_json::Map<String, Value> = counts
            .into_iter()
            .map(|(name, [pass, fail])| (name.to_owned(), json!({"pass": pass, "fail": fail})))
            .collect();
        scenarios.push(json!({
            "nbar": nbar,
            "cutoff": scenario.cutoff,
            "tail": scenario.tail,
            "moment_deviation": scenario.moment_deviation(),
            "implementations": imps.len(),
            "counts": counts,
        }));
    }

    let violations = records
        .iter()
        .filter(|r| is_rigorous(r.relation) && !r.passes(ctx.tol))
        .count();
    let findings = records
        .iter()
        .filter(|r| !is_rigorous(r.relation) && !r.passes(ctx.tol))
        .count();
    let params = json!({
        "nbar": cfg.nbar,
        "tail_tol": cfg.tail_tol,
        "samples": cfg.samples,
        "strength": [lo, hi],
        "couplings": cfg.couplings,
        "seed": seed,
        "restarts": search.restarts,
        "tol": ctx.tol,
    });
    let summary = json!({
        "scenarios": scenarios,
        "samples": samples,
        "violations": violations,
        "findings": findings,
    });
    ctx.finish(params, summary, records, violations > 0)
}

fn positive_control(ctx: &Ctx, cfg: ControlConfig) -> Result<Outcome, CliError> {
    let law = match cfg.law {
        Some(law) => law,
        None => ConservationLaw::new(
            HilbertSpec::tripartite(2, 2, &[])?,
            sum_x(1),
            sum_x(1),
            None,
        )?,
    };
    let a = cfg.observable.unwrap_or_else(|| pauli(Pauli::X));
    let control = way_positive_control(&law, &a)?;
    let certify = ctx.certify();
    let precise = control.model.is_precise(&certify)?;
    let nondisturbing = control.model.is_nondisturbing(&certify)?;
    let violation =
        !precise.holds || !nondisturbing.holds || control.conservation_residual > ctx.tol;
    let params = json!({"certification_seed": certify.seed, "tol": ctx.tol});
    let summary = json!({
        "conservation_residual": control.conservation_residual,
        "precise": certificate_json(&precise),
        "nondisturbing": certificate_json(&nondisturbing),
        "model": control.model,
    });
    ctx.finish(params, summary, Vec::new(), violation)
}
