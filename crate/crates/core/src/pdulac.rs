//! Resonances and Poincaré–Dulac normalization, with the repelling
//! `(λ, λⁿ)` and semihyperbolic `(1, λ)` drivers.

use serde::{Deserialize, Serialize};

use crate::dyngroup::{coefficient_margins, Certificate, TauSpec};
use crate::error::{Error, Result};
use crate::field::{PrimeContext, Scalar};
use crate::linalg;
use crate::series::{
    compose_components, compose_homogeneous, one_based, verify_conjugacy, FormalMap, MonomialCache, MultiIndex,
    Residual, Series,
};

/// `λ_k = λ₁^i λ₂^j` with `|(i,j)| ≥ 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Resonance {
    #[serde(with = "one_based")]
    pub component: usize,
    pub index: MultiIndex,
}

fn eigen_power(eigs: &[Scalar], idx: MultiIndex) -> Scalar {
    eigs.iter()
        .enumerate()
        .fold(Scalar::one(), |acc, (k, l)| acc * l.powi(i64::from(idx.get(k))))
}

/// All resonances of the eigenvalue vector with `2 ≤ |a| ≤ maxdeg`.
pub fn resonances_of(eigs: &[Scalar], maxdeg: u32) -> Vec<Resonance> {
    let mut out = Vec::new();
    for d in 2..=maxdeg {
        for idx in MultiIndex::of_degree(eigs.len(), d) {
            let pw = eigen_power(eigs, idx);
            for (k, l) in eigs.iter().enumerate() {
                if *l == pw {
                    out.push(Resonance {
                        component: k,
                        index: idx,
                    });
                }
            }
        }
    }
    out
}

pub fn find_resonances(l1: &Scalar, l2: &Scalar, maxdeg: u32) -> Vec<Resonance> {
    resonances_of(&[l1.clone(), l2.clone()], maxdeg)
}

/// How the certificates of a driver run were obtained: τ, the scaling `q`
/// applied before normalizing, and whether `F^{-1}` was normalized.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificateFrame {
    pub tau: Option<TauSpec>,
    pub scale: Scalar,
    pub via_inverse: bool,
}

impl Default for CertificateFrame {
    fn default() -> Self {
        CertificateFrame {
            tau: None,
            scale: Scalar::one(),
            via_inverse: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PDResult {
    pub normal_form: FormalMap,
    pub conjugator: FormalMap,
    pub inverse: FormalMap,
    pub resonances: Vec<Resonance>,
    /// `v_p(τ_k(a)·[Φ]^k_a)` in the certificate frame.
    pub certificates: Vec<Certificate>,
    /// `v_p([F₀]^k_a)` in the certificate frame, where the driver promises
    /// an integral normal form.
    pub normal_form_certificates: Vec<Certificate>,
    pub frame: CertificateFrame,
    pub residual: Residual,
}

impl PDResult {
    pub fn worst_margin(&self) -> Option<&Certificate> {
        self.certificates
            .iter()
            .chain(&self.normal_form_certificates)
            .min_by_key(|c| c.margin)
    }

    /// Fails with the first negative margin, which the drivers' theorems rule out.
    pub fn certified(&self) -> Result<()> {
        let bad = self
            .certificates
            .iter()
            .map(|c| ("conjugator", c))
            .chain(self.normal_form_certificates.iter().map(|c| ("normal form", c)))
            .find(|(_, c)| c.margin < 0);
        match bad {
            Some((what, c)) => Err(Error::CertificateViolation(format!(
                "{what} margin {} at component {}, index {}",
                c.margin,
                c.component + 1,
                c.index
            ))),
            None => Ok(()),
        }
    }
}

/// Degree-by-degree Poincaré–Dulac normalization through degree `n`.
///
/// With `Φ` the composition of the steps so far, the degree-`m` defect is
/// `D = [Φ∘F]_m − [F₀^{<m}∘Φ]_m`. Non-resonant coefficients of the next step
/// are `D/(λ_k − λ^a)`; resonant ones are zero and `D` becomes the `F₀`
/// coefficient.
pub fn pd_normalize(f: &FormalMap, n: u32) -> Result<PDResult> {
    if f.truncation() < n {
        return Err(Error::InsufficientTruncation {
            needed: n,
            have: f.truncation(),
        });
    }
    let f = f.truncated(n);
    let vars = f.vars();
    let eigs = f.eigenvalues().to_vec();
    let f_comps = f.components();
    let mut f_powers = MonomialCache::new(&f_comps, vars)?;
    let mut phi: Vec<Series> = (0..vars).map(|k| Series::var(vars, n, k)).collect();
    let mut f0_tails = vec![Series::zero(vars, n); vars];
    for m in 2..=n {
        let phi_m: Vec<Series> = phi.iter().map(|s| s.with_truncation(m)).collect();
        let f0_m: Vec<Series> = (0..vars)
            .map(|k| {
                let mut s = f0_tails[k].with_truncation(m);
                s.set(MultiIndex::unit(k), eigs[k].clone());
                s
            })
            .collect();
        let mut lhs = vec![Series::zero(vars, m); vars];
        for (k, out) in lhs.iter_mut().enumerate() {
            for (a, c) in phi_m[k].terms() {
                for (b, v) in f_powers.monomial(a).terms().filter(|(b, _)| b.total() == m) {
                    out.add_to(b, &(c * v));
                }
            }
        }
        let rhs = compose_components(&f0_m, &phi_m)?;
        let mut step = vec![Series::zero(vars, n); vars];
        let mut any = false;
        for idx in MultiIndex::of_degree(vars, m) {
            let pw = eigen_power(&eigs, idx);
            for k in 0..vars {
                let d = lhs[k].coeff(idx) - rhs[k].coeff(idx);
                if d.is_zero() {
                    continue;
                }
                let denom = &eigs[k] - &pw;
                if denom.is_zero() {
                    f0_tails[k].set(idx, d);
                } else {
                    step[k].set(idx, d / denom);
                    any = true;
                }
            }
        }
        if any {
            let correction = compose_homogeneous(&step, &phi, m, n)?;
            for k in 0..vars {
                phi[k] = phi[k].add(&correction[k])?;
            }
        }
    }
    let normal_form = FormalMap::new(eigs.clone(), f0_tails)?;
    let conjugator = FormalMap::from_components(phi)?;
    let residual = verify_conjugacy(&f, &normal_form, &conjugator)?;
    if !residual.is_empty() {
        return Err(Error::CertificateViolation(format!(
            "normalization residual nonzero at {:?}",
            residual.first()
        )));
    }
    let inverse = conjugator.inverse()?;
    Ok(PDResult {
        normal_form,
        conjugator,
        inverse,
        resonances: resonances_of(&eigs, n),
        certificates: Vec::new(),
        normal_form_certificates: Vec::new(),
        frame: CertificateFrame::default(),
        residual,
    })
}

/// Runs `pd_normalize` on `F` when `v_p(λ) < 0`, and otherwise on the
/// integralized inverse, mapping the result back to `F`. `tau` builds the
/// τ-descriptor from the repelling eigenvalue actually normalized.
fn certified_drive(
    f: &FormalMap,
    n: u32,
    lambda: &Scalar,
    ctx: &PrimeContext,
    tau: impl Fn(Scalar) -> TauSpec,
    normal_form_integral: bool,
) -> Result<PDResult> {
    if f.truncation() < n {
        return Err(Error::InsufficientTruncation {
            needed: n,
            have: f.truncation(),
        });
    }
    let f = f.truncated(n);
    if !f.tail_is_integral(ctx) {
        return Err(Error::Precondition(
            "nonlinear coefficients must be integral; apply find_integralizing_q first".into(),
        ));
    }
    let v = ctx.val(lambda).expect("eigenvalues are nonzero");
    let nf_margins = |g0: &FormalMap| -> Vec<Certificate> {
        if !normal_form_integral {
            return Vec::new();
        }
        g0.nonlinear_terms()
            .map(|(k, idx, c)| Certificate {
                component: k,
                index: idx,
                margin: ctx.val(c).expect("nonzero"),
            })
            .collect()
    };
    if v < 0 {
        let spec = tau(lambda.clone());
        let mut res = pd_normalize(&f, n)?;
        res.certificates = coefficient_margins(&res.conjugator, &spec, ctx)?;
        res.normal_form_certificates = nf_margins(&res.normal_form);
        res.frame = CertificateFrame {
            tau: Some(spec),
            scale: Scalar::one(),
            via_inverse: false,
        };
        return Ok(res);
    }
    let g = f.inverse()?;
    let q = g.find_integralizing_q(ctx);
    let gs = g.conjugate_by_scaling(&q)?;
    let spec = tau(lambda.recip()?);
    let inner = pd_normalize(&gs, n)?;
    let certificates = coefficient_margins(&inner.conjugator, &spec, ctx)?;
    let normal_form_certificates = nf_margins(&inner.normal_form);
    let q_inv = q.recip()?;
    let conjugator = inner.conjugator.conjugate_by_scaling(&q_inv)?;
    let normal_form = inner.normal_form.conjugate_by_scaling(&q_inv)?.inverse()?;
    let residual = verify_conjugacy(&f, &normal_form, &conjugator)?;
    if !residual.is_empty() {
        return Err(Error::CertificateViolation(format!(
            "inverse-route residual nonzero at {:?}",
            residual.first()
        )));
    }
    let inverse = conjugator.inverse()?;
    Ok(PDResult {
        normal_form,
        conjugator,
        inverse,
        resonances: resonances_of(f.eigenvalues(), n),
        certificates,
        normal_form_certificates,
        frame: CertificateFrame {
            tau: Some(spec),
            scale: q,
            via_inverse: true,
        },
        residual,
    })
}

fn require_two_vars(f: &FormalMap) -> Result<()> {
    if f.vars() != 2 {
        return Err(Error::VarCountMismatch {
            left: 2,
            right: f.vars(),
        });
    }
    Ok(())
}

fn require_off_unit_circle(lambda: &Scalar, ctx: &PrimeContext) -> Result<()> {
    if ctx.val(lambda) == Some(0) {
        return Err(Error::Unsupported(format!("|lambda| = 1 for lambda = {lambda}")));
    }
    Ok(())
}

/// Checks `F₀ = (λx, λⁿy + b xⁿ)` and returns `b`.
pub fn repelling_constant(f0: &FormalMap, n: u32) -> Result<Scalar> {
    require_two_vars(f0)?;
    let target = MultiIndex::new(n, 0);
    let shape_ok = f0.tail(0).is_zero() && f0.tail(1).terms().all(|(idx, _)| idx == target);
    if !shape_ok {
        return Err(Error::Precondition(format!(
            "{f0} is not of the form (λx, λ^{n}y + bx^{n})"
        )));
    }
    Ok(f0.tail(1).coeff(target))
}

/// Normal form `(λx, λⁿy + bxⁿ)` for eigenvalues `(λ, λⁿ)`, `|λ| ≠ 1`,
/// with margins `v(λ^(i+nj)[Φ]¹_(i,j))` and `v(λ^max(n,i+nj)[Φ]²_(i,j))`.
pub fn repelling_normalize(f: &FormalMap, n_pow: u32, n: u32, ctx: &PrimeContext) -> Result<PDResult> {
    require_two_vars(f)?;
    if n_pow < 2 {
        return Err(Error::Precondition("resonance power n must be at least 2".into()));
    }
    let lambda = f.eigenvalue(0).clone();
    require_off_unit_circle(&lambda, ctx)?;
    if *f.eigenvalue(1) != lambda.powi(i64::from(n_pow)) {
        return Err(Error::Precondition(format!(
            "eigenvalues ({lambda}, {}) are not of the form (λ, λ^{n_pow})",
            f.eigenvalue(1)
        )));
    }
    let res = certified_drive(f, n, &lambda, ctx, |l| TauSpec::Mixed { lambda: l, n: n_pow }, false)?;
    repelling_constant(&res.normal_form, n_pow)
        .map_err(|e| Error::CertificateViolation(format!("normal form has wrong shape: {e}")))?;
    Ok(res)
}

/// Checks `F₀ = (f(x), λy(1 + g(x)))`.
pub fn is_semihyperbolic_pd_form(f0: &FormalMap) -> bool {
    f0.vars() == 2
        && f0.eigenvalue(0).is_one()
        && f0.tail(0).terms().all(|(idx, _)| idx.j() == 0)
        && f0.tail(1).terms().all(|(idx, _)| idx.j() == 1)
}

/// Normal form `(f(x), λy(1+g(x)))` for eigenvalues `(1, λ)`, `|λ| ≠ 1`,
/// with margins `v(λ^max(1,j)[Φ]^k_(i,j))` and integrality margins for the
/// normal-form tail.
pub fn semihyperbolic_normalize(f: &FormalMap, n: u32, ctx: &PrimeContext) -> Result<PDResult> {
    require_two_vars(f)?;
    if !f.eigenvalue(0).is_one() {
        return Err(Error::Precondition(format!(
            "first eigenvalue must be 1, got {}",
            f.eigenvalue(0)
        )));
    }
    let lambda = f.eigenvalue(1).clone();
    require_off_unit_circle(&lambda, ctx)?;
    let res = certified_drive(f, n, &lambda, ctx, |l| TauSpec::Maxes { lambda: l }, true)?;
    if !is_semihyperbolic_pd_form(&res.normal_form) {
        return Err(Error::CertificateViolation(format!(
            "normal form {} is not of the form (f(x), λy(1+g(x)))",
            res.normal_form
        )));
    }
    Ok(res)
}

/// Conjugates `(λx, λⁿy + Cxⁿ)` by `L = diag(1, 1/C)` to `(λx, λⁿy + xⁿ)`;
/// `C = 0` gives the identity.
pub fn reduce_resonant_constant(f0: &FormalMap, n_pow: u32) -> Result<(FormalMap, FormalMap)> {
    let c = repelling_constant(f0, n_pow)?;
    let trunc = f0.truncation();
    if c.is_zero() || c.is_one() {
        return Ok((f0.clone(), FormalMap::identity(2, trunc)));
    }
    let l = FormalMap::linear(vec![Scalar::one(), c.recip()?], trunc)?;
    let mut tail = Series::zero(2, trunc);
    tail.set(MultiIndex::new(n_pow, 0), Scalar::one());
    let reduced = FormalMap::new(f0.eigenvalues().to_vec(), vec![Series::zero(2, trunc), tail])?;
    let residual = verify_conjugacy(f0, &reduced, &l)?;
    if !residual.is_empty() {
        return Err(Error::CertificateViolation(
            "diagonal reduction residual nonzero".into(),
        ));
    }
    Ok((reduced, l))
}

/// Unknown coefficient of an intertwiner `Φ` in `Φ∘F₀ = L∘Φ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unknown {
    #[serde(with = "one_based")]
    pub component: usize,
    pub index: MultiIndex,
}

/// Result of the linear-system test for `Φ∘F₀ = L∘Φ` with
/// `F₀ = (λx, λⁿy + bxⁿ)`, `b ≠ 0`, and `L` its linear part.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearizationObstruction {
    pub n: u32,
    /// The equation at `(component 2, (n,0))`, as nonzero `(unknown, coefficient)` pairs.
    pub witness_row: Vec<(Unknown, Scalar)>,
    /// Whether the full system implies `[Φ]²_(0,1) = 0`.
    pub y_coefficient_forced_zero: bool,
}

/// Builds the homogeneous system for the second component of an
/// intertwiner `Φ` with `Φ∘F₀ = L∘Φ` through the truncation of `F₀`, and
/// decides whether it forces the y-linear coefficient of `Φ²` to vanish.
pub fn linearization_obstruction(f0: &FormalMap, n_pow: u32) -> Result<LinearizationObstruction> {
    let b = repelling_constant(f0, n_pow)?;
    if b.is_zero() {
        return Err(Error::Precondition("resonant constant is zero; F0 is linear".into()));
    }
    let trunc = f0.truncation();
    if trunc < n_pow {
        return Err(Error::InsufficientTruncation {
            needed: n_pow,
            have: trunc,
        });
    }
    let k = 1;
    let lambda_k = f0.eigenvalue(k).clone();
    let unknowns: Vec<MultiIndex> = (1..=trunc).flat_map(|d| MultiIndex::of_degree(2, d)).collect();
    let inner = f0.components();
    // columns: [F₀^a]_b − λ_k δ_ab for each unknown a; rows: each output index b
    let images: Vec<Series> = unknowns
        .iter()
        .map(|a| Series::monomial(2, trunc, *a, Scalar::one()).compose(&inner))
        .collect::<Result<_>>()?;
    let mut rows: Vec<Vec<Scalar>> = Vec::with_capacity(unknowns.len());
    let mut witness_row = Vec::new();
    for b_idx in &unknowns {
        let row: Vec<Scalar> = unknowns
            .iter()
            .zip(&images)
            .map(|(a, img)| {
                let mut v = img.coeff(*b_idx);
                if a == b_idx {
                    v -= &lambda_k;
                }
                v
            })
            .collect();
        if *b_idx == MultiIndex::new(n_pow, 0) {
            witness_row = unknowns
                .iter()
                .zip(&row)
                .filter(|(_, v)| !v.is_zero())
                .map(|(a, v)| {
                    (
                        Unknown {
                            component: k,
                            index: *a,
                        },
                        v.clone(),
                    )
                })
                .collect();
        }
        rows.push(row);
    }
    let y_pos = unknowns
        .iter()
        .position(|a| *a == MultiIndex::new(0, 1))
        .expect("linear indices are unknowns");
    let mut target = vec![Scalar::zero(); unknowns.len()];
    target[y_pos] = Scalar::one();
    Ok(LinearizationObstruction {
        n: n_pow,
        witness_row,
        y_coefficient_forced_zero: linalg::in_row_space(&rows, &target),
    })
}
