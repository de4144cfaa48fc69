//! Job files, dispatch to the drivers, and reports.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::dyngroup::{check_dynamic, membership, Certificate, DynWitness, Membership, Strength, TauSpec};
use crate::error::{Error, Result};
use crate::field::{NormValue, PrimeContext, Scalar};
use crate::oned::{equiv_1d, normal_form_1d, OneDNormalForm, Verdict};
use crate::pdj::{decide_equiv_repelling, decide_equiv_semihyperbolic, integralize, pdj_reduce, GammaLadder, PDJForm};
use crate::pdulac::{
    pd_normalize, repelling_normalize, resonances_of, semihyperbolic_normalize, CertificateFrame, PDResult, Resonance,
};
use crate::series::{verify_conjugacy, FormalMap, Residual};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Normalize,
    Pdj,
    Equiv,
    Resonances,
    Dyncheck,
    Verify,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Auto,
    Repelling,
    Semihyperbolic,
    Generic,
}

/// One job. The payload fields a command needs:
/// `normalize`/`pdj`: one map; `equiv`: two; `verify`: `[F, F₀, Φ]`;
/// `resonances`: `eigenvalues` and `bound`; `dyncheck`: `tau`, `bound`,
/// optional maps for membership.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobSpec {
    pub prime: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<u32>,
    pub command: Command,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub maps: Vec<FormalMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<TauSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<Scalar>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strength: Option<Strength>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualStatus {
    Verified,
    Refuted,
    NotApplicable,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub command: Option<Command>,
    pub prime: u64,
    pub degree: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub input: Vec<FormalMap>,
    /// Scale `q` with `L_q^{-1}∘F∘L_q` integral, when the driver needed one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<Scalar>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal_form: Option<FormalMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conjugator: Option<FormalMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oned: Option<OneDNormalForm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pdj: Option<PDJForm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder: Option<GammaLadder>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub resonances: Vec<Resonance>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub certificates: Vec<Certificate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub normal_form_certificates: Vec<Certificate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate_frame: Option<CertificateFrame>,
    pub residual_status: Option<ResidualStatus>,
    #[serde(default, skip_serializing_if = "Residual::is_empty")]
    pub residual: Residual,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence_radius: Option<NormValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<DynWitness>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub membership: Vec<Membership>,
}

impl Report {
    fn new(job: &JobSpec) -> Self {
        Report {
            command: Some(job.command),
            prime: job.prime,
            degree: job.degree,
            ..Report::default()
        }
    }

    /// A `verify` job re-checking this report's `(F, F₀, Φ)` triple.
    pub fn to_verify_job(&self) -> Option<JobSpec> {
        let f = self.input.first()?.clone();
        Some(JobSpec {
            prime: self.prime,
            degree: self.degree,
            command: Command::Verify,
            mode: Mode::Auto,
            maps: vec![f, self.normal_form.clone()?, self.conjugator.clone()?],
            tau: None,
            n: None,
            eigenvalues: None,
            bound: None,
            strength: None,
        })
    }

    /// 0 on success, 1 when a `verify` job finds a nonzero residual.
    pub fn exit_code(&self) -> i32 {
        if self.residual_status == Some(ResidualStatus::Refuted) {
            1
        } else {
            0
        }
    }
}

/// Exit code for a failed job: 3 for certificate violations, 2 otherwise.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::CertificateViolation(_) => 3,
        _ => 2,
    }
}

fn one_map(job: &JobSpec, count: usize) -> Result<&[FormalMap]> {
    if job.maps.len() != count {
        return Err(Error::Precondition(format!(
            "{:?} needs {count} map(s), got {}",
            job.command,
            job.maps.len()
        )));
    }
    Ok(&job.maps)
}

fn degree_for(job: &JobSpec, f: &FormalMap) -> Result<u32> {
    let n = job.degree.unwrap_or(f.truncation());
    if n < 2 {
        return Err(Error::Precondition("degree N must be at least 2".into()));
    }
    if n > f.truncation() {
        return Err(Error::InsufficientTruncation {
            needed: n,
            have: f.truncation(),
        });
    }
    Ok(n)
}

/// The `n` with `λ₂ = λ₁ⁿ`, `n ≥ 2`, if any.
fn power_relation(l1: &Scalar, l2: &Scalar, ctx: &PrimeContext) -> Option<u32> {
    let (v1, v2) = (ctx.val(l1)?, ctx.val(l2)?);
    if v1 == 0 || v2 % v1 != 0 {
        return None;
    }
    let n = v2 / v1;
    (n >= 2 && l1.powi(n) == *l2).then_some(n as u32)
}

/// Chooses the driver for a two-variable map from its eigenvalues.
fn resolve_mode(job: &JobSpec, f: &FormalMap, n: u32, ctx: &PrimeContext) -> Result<(Mode, Option<u32>, Vec<String>)> {
    let (l1, l2) = (f.eigenvalue(0), f.eigenvalue(1));
    let explicit_n = job.n;
    match job.mode {
        Mode::Repelling => {
            let p = explicit_n
                .or_else(|| power_relation(l1, l2, ctx))
                .ok_or_else(|| Error::Precondition(format!("eigenvalues ({l1}, {l2}) are not (λ, λⁿ)")))?;
            return Ok((Mode::Repelling, Some(p), Vec::new()));
        }
        Mode::Semihyperbolic => return Ok((Mode::Semihyperbolic, None, Vec::new())),
        Mode::Generic => {
            return Ok((
                Mode::Generic,
                None,
                vec!["generic normalization: no analyticity certificate is claimed".into()],
            ))
        }
        Mode::Auto => {}
    }
    let (v1, v2) = (ctx.val(l1), ctx.val(l2));
    if l1.is_one() && v2 != Some(0) {
        return Ok((Mode::Semihyperbolic, None, Vec::new()));
    }
    if let Some(p) = explicit_n
        .filter(|p| l1.powi(i64::from(*p)) == *l2)
        .or_else(|| power_relation(l1, l2, ctx))
    {
        if v1 != Some(0) {
            return Ok((Mode::Repelling, Some(p), Vec::new()));
        }
    }
    let saddle = matches!((v1, v2), (Some(a), Some(b)) if (a < 0 && b > 0) || (a > 0 && b < 0));
    if saddle && !resonances_of(f.eigenvalues(), n).is_empty() {
        return Err(Error::OutOfScope(
            "saddle eigenvalues |λ1| < 1 < |λ2| with resonances (open problem)".into(),
        ));
    }
    Ok((
        Mode::Generic,
        None,
        vec!["eigenvalues fit neither certified case: no analyticity certificate is claimed".into()],
    ))
}

fn fill_pd(report: &mut Report, f: &FormalMap, q: &Scalar, res: &PDResult, ctx: &PrimeContext) -> Result<()> {
    let q_inv = q.recip()?;
    let nf = res.normal_form.conjugate_by_scaling(&q_inv)?;
    let phi = res.conjugator.conjugate_by_scaling(&q_inv)?;
    let residual = verify_conjugacy(f, &nf, &phi)?;
    report.residual_status = Some(if residual.is_empty() {
        ResidualStatus::Verified
    } else {
        ResidualStatus::Refuted
    });
    report.residual = residual;
    report.normal_form = Some(nf);
    report.conjugator = Some(phi.clone());
    report.resonances = res.resonances.clone();
    report.certificates = res.certificates.clone();
    report.normal_form_certificates = res.normal_form_certificates.clone();
    if res.frame.tau.is_some() {
        report.certificate_frame = Some(res.frame.clone());
        if res.worst_margin().is_none_or(|c| c.margin >= 0) {
            report.convergence_radius = res.conjugator.growth_certificate(ctx).map(|g| g.radius);
        }
    }
    if !q.is_one() {
        report.scale = Some(q.clone());
    }
    Ok(())
}

fn run_normalize(job: &JobSpec, report: &mut Report, ctx: &PrimeContext) -> Result<()> {
    let f = &one_map(job, 1)?[0];
    let n = degree_for(job, f)?;
    report.input = vec![f.truncated(n)];
    if f.vars() == 1 {
        let red = normal_form_1d(&f.truncated(n).component(0))?;
        let f0 = FormalMap::from_components(vec![red.form.series(n)])?;
        let h = FormalMap::from_components(vec![red.conjugator.clone()])?;
        let residual = verify_conjugacy(&f.truncated(n), &f0, &h)?;
        report.residual_status = Some(if residual.is_empty() {
            ResidualStatus::Verified
        } else {
            ResidualStatus::Refuted
        });
        report.convergence_radius = red.growth_certificate(ctx).map(|g| g.radius);
        report.oned = Some(red.form);
        report.normal_form = Some(f0);
        report.conjugator = Some(h);
        report.residual = residual;
        return Ok(());
    }
    let (mode, power, warnings) = resolve_mode(job, f, n, ctx)?;
    report.mode = Some(mode);
    report.warnings = warnings;
    let res;
    let q;
    match mode {
        Mode::Repelling => {
            let (fs, qq) = integralize(f, ctx)?;
            q = qq;
            res = repelling_normalize(&fs, power.expect("resolved"), n, ctx)?;
            res.certified()?;
        }
        Mode::Semihyperbolic => {
            let (fs, qq) = integralize(f, ctx)?;
            q = qq;
            res = semihyperbolic_normalize(&fs, n, ctx)?;
            res.certified()?;
        }
        Mode::Generic | Mode::Auto => {
            q = Scalar::one();
            res = pd_normalize(f, n)?;
        }
    }
    fill_pd(report, &f.truncated(n), &q, &res, ctx)
}

fn run_pdj(job: &JobSpec, report: &mut Report, ctx: &PrimeContext) -> Result<()> {
    let f = &one_map(job, 1)?[0];
    let n = degree_for(job, f)?;
    let f = f.truncated(n);
    report.input = vec![f.clone()];
    report.mode = Some(Mode::Semihyperbolic);
    let (fs, q) = integralize(&f, ctx)?;
    let pd = semihyperbolic_normalize(&fs, n, ctx)?;
    pd.certified()?;
    let red = pdj_reduce(&pd.normal_form, ctx)?;
    if !red.ladder.all_margins_nonnegative() {
        return Err(Error::CertificateViolation("negative ladder margin".into()));
    }
    // Φ_total = H∘Φ in the integral frame, moved back to F's frame
    let total = red.conjugator.compose(&pd.conjugator)?;
    let q_inv = q.recip()?;
    let form = red.form.scaled(&q_inv);
    let nf = form.to_map(n)?;
    let phi = total.conjugate_by_scaling(&q_inv)?;
    let residual = verify_conjugacy(&f, &nf, &phi)?;
    report.residual_status = Some(if residual.is_empty() {
        ResidualStatus::Verified
    } else {
        ResidualStatus::Refuted
    });
    report.residual = residual;
    report.normal_form = Some(nf);
    report.conjugator = Some(phi);
    report.resonances = pd.resonances.clone();
    report.certificates = pd.certificates.clone();
    report.normal_form_certificates = pd.normal_form_certificates.clone();
    report.certificate_frame = Some(pd.frame.clone());
    report.pdj = Some(form);
    report.ladder = Some(red.ladder);
    if !q.is_one() {
        report.scale = Some(q);
    }
    Ok(())
}

fn run_equiv(job: &JobSpec, report: &mut Report, ctx: &PrimeContext) -> Result<()> {
    let maps = one_map(job, 2)?;
    let (f, g) = (&maps[0], &maps[1]);
    let n = degree_for(job, f)?.min(degree_for(job, g)?);
    report.input = vec![f.truncated(n), g.truncated(n)];
    if f.vars() != g.vars() {
        return Err(Error::VarCountMismatch {
            left: f.vars(),
            right: g.vars(),
        });
    }
    if f.vars() == 1 {
        report.verdict = Some(equiv_1d(
            &f.truncated(n).component(0),
            &g.truncated(n).component(0),
            ctx,
        )?);
        return Ok(());
    }
    let (mode, power, warnings) = resolve_mode(job, f, n, ctx)?;
    report.mode = Some(mode);
    report.warnings = warnings;
    let verdict = match mode {
        Mode::Repelling => decide_equiv_repelling(f, g, power.expect("resolved"), n, ctx)?,
        Mode::Semihyperbolic => decide_equiv_semihyperbolic(f, g, n, ctx)?,
        _ => {
            return Err(Error::Unsupported(
                "equivalence is decided only in the repelling and semihyperbolic cases".into(),
            ))
        }
    };
    report.verdict = Some(verdict);
    Ok(())
}

fn run_resonances(job: &JobSpec, report: &mut Report) -> Result<()> {
    let eigs = match (&job.eigenvalues, job.maps.first()) {
        (Some(e), _) => e.clone(),
        (None, Some(f)) => f.eigenvalues().to_vec(),
        (None, None) => return Err(Error::Precondition("resonances needs eigenvalues or a map".into())),
    };
    if eigs.is_empty() || eigs.len() > 2 || eigs.iter().any(Scalar::is_zero) {
        return Err(Error::Precondition("need one or two nonzero eigenvalues".into()));
    }
    let bound = job
        .bound
        .or(job.degree)
        .ok_or_else(|| Error::Precondition("resonances needs bound or degree".into()))?;
    report.resonances = resonances_of(&eigs, bound);
    Ok(())
}

fn run_dyncheck(job: &JobSpec, report: &mut Report, ctx: &PrimeContext) -> Result<()> {
    let spec = job
        .tau
        .as_ref()
        .ok_or_else(|| Error::Precondition("dyncheck needs a tau descriptor".into()))?;
    let bound = job.bound.or(job.degree).unwrap_or(6);
    let strength = job.strength.unwrap_or(Strength::Strong);
    report.witness = check_dynamic(spec, bound, strength, ctx)?;
    report.verdict = Some(match &report.witness {
        None => Verdict::equivalent(format!("{strength:?} dynamic through total degree {bound}")),
        Some(w) => Verdict::inequivalent(format!(
            "fails at target {} with c = {} in component {}",
            w.target,
            w.c,
            w.component + 1
        )),
    });
    report.input = job.maps.clone();
    report.membership = job
        .maps
        .iter()
        .map(|f| membership(f, spec, ctx))
        .collect::<Result<_>>()?;
    Ok(())
}

fn run_verify(job: &JobSpec, report: &mut Report, ctx: &PrimeContext) -> Result<()> {
    let maps = one_map(job, 3)?;
    let residual = verify_conjugacy(&maps[0], &maps[1], &maps[2])?;
    report.residual_status = Some(if residual.is_empty() {
        ResidualStatus::Verified
    } else {
        ResidualStatus::Refuted
    });
    report.residual = residual;
    report.input = vec![maps[0].clone()];
    report.normal_form = Some(maps[1].clone());
    report.conjugator = Some(maps[2].clone());
    if let Some(spec) = &job.tau {
        report.membership = vec![membership(&maps[2], spec, ctx)?];
    }
    Ok(())
}

pub fn run_job(job: &JobSpec) -> Result<Report> {
    let ctx = PrimeContext::new(job.prime)?;
    let mut report = Report::new(job);
    match job.command {
        Command::Normalize => run_normalize(job, &mut report, &ctx)?,
        Command::Pdj => run_pdj(job, &mut report, &ctx)?,
        Command::Equiv => run_equiv(job, &mut report, &ctx)?,
        Command::Resonances => run_resonances(job, &mut report)?,
        Command::Dyncheck => run_dyncheck(job, &mut report, &ctx)?,
        Command::Verify => run_verify(job, &mut report, &ctx)?,
    }
    Ok(report)
}

/// Runs independent jobs on separate threads; results keep the input order.
pub fn run_batch(jobs: &[JobSpec]) -> Vec<Result<Report>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = jobs.iter().map(|j| s.spawn(move || run_job(j))).collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::CertificateViolation("job panicked".into())))
            })
            .collect()
    })
}

pub fn render_text(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "command: {:?}  p = {}",
        report.command.unwrap_or(Command::Verify),
        report.prime
    );
    if let Some(mode) = report.mode {
        let _ = writeln!(out, "mode: {mode:?}");
    }
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    if let Some(v) = &report.verdict {
        let word = if v.equivalent { "equivalent" } else { "inequivalent" };
        let _ = writeln!(out, "verdict: {word} ({})", v.reason);
    }
    if let Some(q) = &report.scale {
        let _ = writeln!(out, "integralizing scale q = {q}");
    }
    if let Some(f) = &report.oned {
        let _ = writeln!(out, "one-variable form: m = {}, rho = {}, mu = {}", f.m, f.rho, f.mu);
    }
    if let Some(f) = &report.pdj {
        let r: Vec<String> = f.r.iter().map(ToString::to_string).collect();
        let _ = writeln!(
            out,
            "PDJ form: lambda = {}, m = {}, rho = {}, mu = {}, r = [{}]",
            f.lambda,
            f.oned.m,
            f.oned.rho,
            f.oned.mu,
            r.join(", ")
        );
    }
    if let Some(f) = &report.normal_form {
        let _ = writeln!(out, "normal form: {f}");
    }
    if let Some(f) = &report.conjugator {
        let _ = writeln!(out, "conjugator: {f}");
    }
    if !report.resonances.is_empty() {
        let rs: Vec<String> = report
            .resonances
            .iter()
            .map(|r| format!("({}, {})", r.component + 1, r.index))
            .collect();
        let _ = writeln!(out, "resonances: {}", rs.join(" "));
    } else if report.command == Some(Command::Resonances) {
        let _ = writeln!(out, "resonances: none");
    }
    if !report.certificates.is_empty() {
        let worst = report.certificates.iter().map(|c| c.margin).min().unwrap_or(0);
        let _ = writeln!(
            out,
            "certificates: {} coefficients, minimum margin {worst}",
            report.certificates.len()
        );
        for c in report.certificates.iter().filter(|c| c.margin < 0) {
            let _ = writeln!(
                out,
                "  negative margin {} at ({}, {})",
                c.margin,
                c.component + 1,
                c.index
            );
        }
    }
    if let Some(l) = &report.ladder {
        let _ = writeln!(out, "ladder: {} coefficients, scale {}", l.c.len(), l.scale);
    }
    if let Some(w) = &report.witness {
        let _ = writeln!(
            out,
            "witness: target {} -> c = {} fails in component {} ({} < {})",
            w.target,
            w.c,
            w.component + 1,
            w.lhs_valuation,
            w.rhs_valuation
        );
    }
    for (i, m) in report.membership.iter().enumerate() {
        let status = if m.passes() { "member" } else { "not a member" };
        let _ = write!(out, "membership[{i}]: {status}");
        if let Some(c) = m.first_failure() {
            let _ = write!(out, ", fails at ({}, {}) margin {}", c.component + 1, c.index, c.margin);
        }
        let _ = writeln!(out);
    }
    if let Some(s) = report.residual_status {
        let _ = writeln!(out, "residual: {s:?}");
        if let Some(e) = report.residual.first() {
            let _ = writeln!(
                out,
                "  first nonzero at ({}, {}) = {}",
                e.component + 1,
                e.index,
                e.value
            );
        }
    }
    if let Some(r) = &report.convergence_radius {
        let _ = writeln!(out, "convergence radius: {r}");
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Text,
}

/// Normal forms of p-adic analytic germs.
#[derive(Debug, Parser)]
#[command(name = "padic-dulac", version)]
pub struct Args {
    /// Job file (JSON); `-` reads standard input.
    #[arg(long)]
    pub input: PathBuf,
    /// Override the truncation degree N.
    #[arg(long)]
    pub degree: Option<u32>,
    /// Override the normalization mode.
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// TauSpec file (JSON) overriding the job's tau.
    #[arg(long)]
    pub tau: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub report: ReportFormat,
    /// The input holds a JSON array of jobs, run concurrently.
    #[arg(long)]
    pub batch: bool,
}

fn read_input(path: &PathBuf) -> Result<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::Read::read_to_string(&mut std::io::stdin(), &mut s)?;
        Ok(s)
    } else {
        Ok(std::fs::read_to_string(path)?)
    }
}

fn load_jobs(args: &Args) -> Result<Vec<JobSpec>> {
    let text = read_input(&args.input)?;
    let mut jobs: Vec<JobSpec> = if args.batch {
        serde_json::from_str(&text)?
    } else {
        vec![serde_json::from_str(&text)?]
    };
    let tau: Option<TauSpec> = match &args.tau {
        Some(p) => Some(serde_json::from_str(&std::fs::read_to_string(p)?)?),
        None => None,
    };
    for job in &mut jobs {
        if let Some(d) = args.degree {
            job.degree = Some(d);
        }
        if let Some(m) = args.mode {
            job.mode = m;
        }
        if tau.is_some() {
            job.tau = tau.clone();
        }
    }
    Ok(jobs)
}

#[derive(Serialize)]
struct ErrorReport {
    error: String,
    exit_code: i32,
}

/// Runs the CLI and returns `(stdout text, exit code)`.
pub fn execute(args: &Args) -> (String, i32) {
    let jobs = match load_jobs(args) {
        Ok(j) => j,
        Err(e) => {
            let code = error_exit_code(&e);
            return (format!("error: {e}\n"), code);
        }
    };
    let results = run_batch(&jobs);
    let mut code = 0;
    let mut json_items = Vec::new();
    let mut text = String::new();
    for r in &results {
        let c = match r {
            Ok(rep) => rep.exit_code(),
            Err(e) => error_exit_code(e),
        };
        code = code.max(c);
        match args.report {
            ReportFormat::Json => json_items.push(match r {
                Ok(rep) => serde_json::to_value(rep).expect("reports serialize"),
                Err(e) => serde_json::to_value(ErrorReport {
                    error: e.to_string(),
                    exit_code: c,
                })
                .expect("errors serialize"),
            }),
            ReportFormat::Text => {
                if results.len() > 1 {
                    text.push_str("---\n");
                }
                match r {
                    Ok(rep) => text.push_str(&render_text(rep)),
                    Err(e) => {
                        let _ = writeln!(text, "error: {e}");
                    }
                }
            }
        }
    }
    let out = match args.report {
        ReportFormat::Json => {
            let value = if args.batch {
                serde_json::Value::Array(json_items)
            } else {
                json_items.pop().expect("one job")
            };
            serde_json::to_string_pretty(&value).expect("json") + "\n"
        }
        ReportFormat::Text => text,
    };
    (out, code)
}
