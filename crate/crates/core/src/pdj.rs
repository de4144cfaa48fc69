//! Reduction of semihyperbolic PD forms `(f(x), λy(1+g(x)))` to the
//! polynomial form `(f_{m,ρ,μ}(x), λy(1+r(x)))` with `deg r < m`, and the
//! equivalence deciders for the repelling and semihyperbolic cases.
//!
//! The ladder coefficient `c_{n+1}` is fixed by the congruence
//!
//! ```text
//! (1+g)(1+c f^{n+1})(1+α∘f) ≡ (1+r)(1+c x^{n+1})(1+α)  mod x^{m+n+1}
//! ```
//!
//! solved by expanding the degree-`(m+n)` coefficient, in which `c` enters
//! with factor `+(n+1)ρ`. For `f = x + x²`, `g = x + x²` this gives
//! `c₁ = −1`. A closed form that assigns `c` the opposite sign would give
//! `+1`, which fails the congruence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{NormValue, PrimeContext, Scalar};
use crate::oned::{normal_form_1d, series_inverse, OneDNormalForm, Verdict};
use crate::pdulac::{is_semihyperbolic_pd_form, repelling_constant, repelling_normalize, semihyperbolic_normalize};
use crate::series::{verify_conjugacy, FormalMap, GrowthCertificate, MultiIndex, Residual, Series};

/// `(f_{m,ρ,μ}(x), λy(1+r(x)))`; `r` holds coefficients of degrees
/// `0..m`, with `r[0] = 0`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PDJForm {
    pub lambda: Scalar,
    #[serde(flatten)]
    pub oned: OneDNormalForm,
    pub r: Vec<Scalar>,
}

impl PDJForm {
    pub fn r_series(&self, trunc: u32) -> Series {
        Series::univariate(trunc, self.r.iter().enumerate().map(|(k, c)| (k as u32, c.clone())))
    }

    pub fn to_map(&self, trunc: u32) -> Result<FormalMap> {
        let f = self.oned.series(trunc);
        let comp1 = lift_x(&f, trunc);
        let mut comp2 = Series::zero(2, trunc);
        comp2.set(MultiIndex::new(0, 1), self.lambda.clone());
        for (k, c) in self.r.iter().enumerate() {
            comp2.add_to(MultiIndex::new(k as u32, 1), &(c * &self.lambda));
        }
        FormalMap::from_components(vec![comp1, comp2])
    }

    /// Form of `L_c^{-1}∘F∘L_c`.
    pub fn scaled(&self, c: &Scalar) -> PDJForm {
        PDJForm {
            lambda: self.lambda.clone(),
            oned: self.oned.scaled(c),
            r: self.r.iter().enumerate().map(|(k, rk)| rk * c.powi(k as i64)).collect(),
        }
    }
}

/// The ladder `1+α = Π(1 + c_n x^n)`, computed in the frame scaled by `q`
/// where the form and `g` are integral.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GammaLadder {
    pub scale: Scalar,
    pub rho: Scalar,
    /// `c_1, c_2, …` in the scaled frame.
    pub c: Vec<Scalar>,
    /// `1+α` in the scaled frame.
    pub assembled: Series,
    /// `v_p(n!·ρⁿ·c_n)`, `None` for `c_n = 0`.
    pub c_margins: Vec<Option<i64>>,
    /// `v_p(n!·ρⁿ·A_n)` for `n = 1..`, `None` for `A_n = 0`.
    pub a_margins: Vec<Option<i64>>,
    /// `|c_n| ≤ 1/|n!ρⁿ| ≤ (p/|ρ|)ⁿ`.
    pub growth: GrowthCertificate,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PDJResult {
    pub form: PDJForm,
    /// `H = (h(x), y(1+α(h(x))))` with `H∘F₀ ≡ F_PDJ∘H`.
    pub conjugator: FormalMap,
    pub oned_conjugator: Series,
    pub ladder: GammaLadder,
    pub residual: Residual,
}

fn lift_x(s: &Series, trunc: u32) -> Series {
    let mut out = Series::zero(2, trunc);
    for (idx, c) in s.terms() {
        out.set(MultiIndex::new(idx.i(), 0), c.clone());
    }
    out
}

fn lift_xy(s: &Series, trunc: u32) -> Series {
    let mut out = Series::zero(2, trunc);
    for (idx, c) in s.terms() {
        out.set(MultiIndex::new(idx.i(), 1), c.clone());
    }
    out
}

/// Splits a semihyperbolic PD form into `(λ, f, g)`.
pub fn split_pd_form(f0: &FormalMap) -> Result<(Scalar, Series, Series)> {
    if !is_semihyperbolic_pd_form(f0) {
        return Err(Error::Precondition(format!(
            "{f0} is not of the form (f(x), λy(1+g(x)))"
        )));
    }
    let n = f0.truncation();
    let lambda = f0.eigenvalue(1).clone();
    let inv = lambda.recip()?;
    let f = Series::univariate(
        n,
        std::iter::once((1, Scalar::one())).chain(f0.tail(0).terms().map(|(idx, c)| (idx.i(), c.clone()))),
    );
    let g = Series::univariate(
        n.saturating_sub(1),
        f0.tail(1).terms().map(|(idx, c)| (idx.i(), c * &inv)),
    );
    Ok((lambda, f, g))
}

fn margin(ctx: &PrimeContext, n: u32, rho: &Scalar, c: &Scalar) -> Option<i64> {
    ctx.val(c)
        .map(|v| ctx.factorial_valuation(u64::from(n)) as i64 + i64::from(n) * ctx.val(rho).expect("ρ ≠ 0") + v)
}

/// Reduces a semihyperbolic PD form to PDJ form.
pub fn pdj_reduce(f0: &FormalMap, ctx: &PrimeContext) -> Result<PDJResult> {
    let (lambda, f, g) = split_pd_form(f0)?;
    if ctx.val(&lambda) == Some(0) {
        return Err(Error::Unsupported(format!("|lambda| = 1 for lambda = {lambda}")));
    }
    let n = f0.truncation();
    let red = match normal_form_1d(&f) {
        Err(Error::AlreadyLinear) => {
            return Err(Error::OutOfScope("first component is linear".into()));
        }
        other => other?,
    };
    let form = red.form.clone();
    let m = form.m;
    let h = red.conjugator.clone();
    let t = n - 1;
    let h_inv = series_inverse(&h)?;
    let g1 = g.substitute(&h_inv.with_truncation(t))?;
    let r_series = g1.truncated(m - 1).with_truncation(t);

    // scale so that ρ, μ and g1 are integral
    let s = ctx.integralizing_exponent(
        [(u64::from(m - 1), &form.rho), (u64::from(2 * m - 2), &form.mu)]
            .into_iter()
            .chain(g1.terms().map(|(idx, c)| (u64::from(idx.i()), c))),
    );
    let q = ctx.prime_power(s as i64);
    let form_s = form.scaled(&q);
    let scale_1d = |ser: &Series| -> Series {
        Series::univariate(
            ser.truncation(),
            ser.terms().map(|(idx, c)| (idx.i(), c * q.powi(i64::from(idx.i())))),
        )
    };
    let g1s = scale_1d(&g1);
    let rs = scale_1d(&r_series);
    let fs = form_s.series(t);
    let rho_s = form_s.rho.clone();

    let one = Series::one(1, t);
    let lhs_base = one.add(&g1s)?;
    let rhs_base = one.add(&rs)?;
    let mut prod = one.clone();
    let mut cs = Vec::new();
    if t >= m {
        for k in 0..=(t - m) {
            let d = m + k;
            let lhs = lhs_base.mul(&prod.substitute(&fs)?)?;
            let rhs = rhs_base.mul(&prod)?;
            let e = lhs.coeff1(d) - rhs.coeff1(d);
            let c = -(e / (&rho_s * Scalar::from_int(i64::from(k) + 1)));
            let factor = Series::univariate(t, [(0, Scalar::one()), (k + 1, c.clone())]);
            prod = prod.mul(&factor)?;
            cs.push(c);
        }
    }

    let c_margins = cs
        .iter()
        .enumerate()
        .map(|(i, c)| margin(ctx, i as u32 + 1, &rho_s, c))
        .collect();
    let a_margins = (1..=t).map(|i| margin(ctx, i, &rho_s, &prod.coeff1(i))).collect();
    let e = 1 + ctx.val(&rho_s).expect("ρ ≠ 0");
    let growth = GrowthCertificate {
        bound: NormValue {
            base: ctx.p(),
            exponent: Some(e),
        },
        radius: NormValue {
            base: ctx.p(),
            exponent: Some(-e),
        },
    };
    let ladder = GammaLadder {
        scale: q.clone(),
        rho: rho_s,
        c: cs,
        assembled: prod.clone(),
        c_margins,
        a_margins,
        growth,
    };

    // map 1+α_s back: A_i = A_i^s q^{-i}
    let q_inv = q.recip()?;
    let k_series = Series::univariate(
        t,
        prod.terms()
            .map(|(idx, c)| (idx.i(), c * q_inv.powi(i64::from(idx.i())))),
    );
    let k_of_h = k_series.substitute(&h.with_truncation(t))?;
    if !k_of_h.coeff1(0).is_one() {
        return Err(Error::CertificateViolation(
            "k(0) != 1 for the combined conjugator".into(),
        ));
    }
    if !h.coeff1(1).is_one() || h.get(MultiIndex::ZERO).is_some() {
        return Err(Error::CertificateViolation("h is not tangent to the identity".into()));
    }
    let conjugator = FormalMap::from_components(vec![lift_x(&h, n), lift_xy(&k_of_h, n)])?;

    let pdj = PDJForm {
        lambda,
        oned: form,
        r: (0..m).map(|k| r_series.coeff1(k)).collect(),
    };
    let residual = verify_conjugacy(f0, &pdj.to_map(n)?, &conjugator)?;
    if !residual.is_empty() {
        return Err(Error::CertificateViolation(format!(
            "PDJ residual nonzero at {:?}",
            residual.first()
        )));
    }
    Ok(PDJResult {
        form: pdj,
        conjugator,
        oned_conjugator: h,
        ladder,
        residual,
    })
}

impl GammaLadder {
    pub fn all_margins_nonnegative(&self) -> bool {
        self.c_margins
            .iter()
            .chain(&self.a_margins)
            .all(|m| m.is_none_or(|v| v >= 0))
    }

    /// `Π(1 + c_n xⁿ)` recomputed from `c`.
    pub fn recompute_product(&self) -> Series {
        let t = self.assembled.truncation();
        self.c.iter().enumerate().fold(Series::one(1, t), |acc, (i, c)| {
            acc.mul(&Series::univariate(t, [(0, Scalar::one()), (i as u32 + 1, c.clone())]))
                .expect("same variable count")
        })
    }

    /// Checks `|c_n|·|n!| ≤ |ρ|^{-n}` and hence `|c_n| ≤ R^n` for `R = p/|ρ|`.
    pub fn growth_holds(&self, ctx: &PrimeContext) -> bool {
        let e = self.growth.bound.exponent.expect("finite bound");
        self.c.iter().enumerate().all(|(i, c)| match ctx.val(c) {
            None => true,
            Some(v) => -v <= e * (i as i64 + 1),
        })
    }
}

/// Scales `F` to integral nonlinear coefficients; returns `(F_s, q)`.
pub fn integralize(f: &FormalMap, ctx: &PrimeContext) -> Result<(FormalMap, Scalar)> {
    let q = f.find_integralizing_q(ctx);
    Ok((f.conjugate_by_scaling(&q)?, q))
}

/// Semihyperbolic normalization followed by PDJ reduction, reported in the
/// coordinates of `F`.
pub fn pdj_pipeline(f: &FormalMap, n: u32, ctx: &PrimeContext) -> Result<PDJForm> {
    let (fs, q) = integralize(f, ctx)?;
    let pd = semihyperbolic_normalize(&fs, n, ctx)?;
    pd.certified()?;
    let red = pdj_reduce(&pd.normal_form, ctx)?;
    Ok(red.form.scaled(&q.recip()?))
}

/// Decides formal (equivalently analytic) equivalence of two maps with
/// eigenvalues `(1, λ)`.
///
/// With PDJ forms of both, equivalence holds iff some `c ∈ ℚ_p^×` has
/// `c^(m−1) = ρ/ρ'`, `μ = c^(2m−2)μ'` and `r_k = c^k r'_k` for every `k`.
/// For `ρ = ρ'`, `c` is a root of unity ζ and the system is solved on its
/// discrete logarithm.
pub fn decide_equiv_semihyperbolic(f: &FormalMap, g: &FormalMap, n: u32, ctx: &PrimeContext) -> Result<Verdict> {
    let a = pdj_pipeline(f, n, ctx)?;
    let b = pdj_pipeline(g, n, ctx)?;
    equiv_pdj_forms(&a, &b, ctx)
}

pub fn equiv_pdj_forms(a: &PDJForm, b: &PDJForm, ctx: &PrimeContext) -> Result<Verdict> {
    if a.lambda != b.lambda {
        return Ok(Verdict::inequivalent(format!(
            "lambda differs: {} vs {}",
            a.lambda, b.lambda
        )));
    }
    let m = a.oned.m;
    if m != b.oned.m {
        return Ok(Verdict::inequivalent(format!("m differs: {m} vs {}", b.oned.m)));
    }
    let ratio = &a.oned.rho / &b.oned.rho;
    if a.oned.mu != &b.oned.mu * &ratio * &ratio {
        return Ok(Verdict::inequivalent("mu is not matched by the rho scaling"));
    }
    let mut constraints = Vec::new();
    for k in 1..m as usize {
        let (ra, rb) = (&a.r[k], &b.r[k]);
        match (ra.is_zero(), rb.is_zero()) {
            (true, true) => {}
            (false, false) => constraints.push((k as u64, ra / rb)),
            _ => {
                return Ok(Verdict::inequivalent(format!("r supports differ at degree {k}")));
            }
        }
    }
    if ratio.is_one() {
        return match ctx.solve_zeta_constraints(&constraints, u64::from(m - 1)) {
            Ok(Some(z)) => Ok(Verdict::equivalent(format!(
                "zeta = g^t with t = {} mod {} in the roots of unity of order {}",
                z.residue, z.modulus, z.group_order
            ))),
            Ok(None) => Ok(Verdict::inequivalent("no root of unity matches r")),
            Err(Error::NonUnitRatio(r)) => Ok(Verdict::inequivalent(format!(
                "r coefficient ratio {r} is not a root of unity"
            ))),
            Err(e) => Err(e),
        };
    }
    constraints.push((u64::from(m - 1), ratio.clone()));
    match ctx.solve_power_constraints(&constraints)? {
        Some(class) => Ok(Verdict::equivalent(format!(
            "scaling c with c^{} = {}",
            class.exponent, class.value
        ))),
        None => Ok(Verdict::inequivalent("no scaling matches rho and r simultaneously")),
    }
}

/// Decides equivalence of two maps with eigenvalues `(λ, λⁿ)`: both
/// resonant constants vanish or neither does.
pub fn decide_equiv_repelling(f: &FormalMap, g: &FormalMap, n_pow: u32, n: u32, ctx: &PrimeContext) -> Result<Verdict> {
    if f.eigenvalues() != g.eigenvalues() {
        return Ok(Verdict::inequivalent("eigenvalues differ"));
    }
    let constant = |m: &FormalMap| -> Result<Scalar> {
        let (ms, _) = integralize(m, ctx)?;
        let pd = repelling_normalize(&ms, n_pow, n, ctx)?;
        pd.certified()?;
        repelling_constant(&pd.normal_form, n_pow)
    };
    let (b1, b2) = (constant(f)?, constant(g)?);
    Ok(match (b1.is_zero(), b2.is_zero()) {
        (true, true) => Verdict::equivalent("both formally linearizable"),
        (false, false) => Verdict::equivalent("both resonant constants nonzero; each reduces to 1"),
        _ => Verdict::inequivalent("one resonant constant is zero and the other is not"),
    })
}
