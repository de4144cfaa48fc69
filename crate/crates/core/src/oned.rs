//! One-variable formal normal forms `f_{m,ρ,μ}(x) = x + ρx^m + μx^(2m−1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{PrimeContext, Scalar};
use crate::series::{FormalMap, GrowthCertificate, MultiIndex, Series};

/// `x + ρx^m + μx^(2m−1)` with `m ≥ 2`, `ρ ≠ 0`. ρ is kept raw, not reduced
/// to a coset representative.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneDNormalForm {
    pub m: u32,
    pub rho: Scalar,
    pub mu: Scalar,
}

impl OneDNormalForm {
    pub fn series(&self, trunc: u32) -> Series {
        Series::univariate(
            trunc,
            [
                (1, Scalar::one()),
                (self.m, self.rho.clone()),
                (2 * self.m - 1, self.mu.clone()),
            ],
        )
    }

    /// Form of `L_c^{-1}∘f∘L_c`.
    pub fn scaled(&self, c: &Scalar) -> OneDNormalForm {
        let e = i64::from(self.m) - 1;
        OneDNormalForm {
            m: self.m,
            rho: &self.rho * c.powi(e),
            mu: &self.mu * c.powi(2 * e),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OneDReduction {
    pub form: OneDNormalForm,
    /// Tangent to the identity, with `h∘f ≡ f_{m,ρ,μ}∘h` through the truncation.
    pub conjugator: Series,
}

impl OneDReduction {
    pub fn growth_certificate(&self, ctx: &PrimeContext) -> Option<GrowthCertificate> {
        self.conjugator.tail_from(2).growth_certificate(ctx)
    }
}

/// Equivalence verdict with a short human-readable reason.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub equivalent: bool,
    pub reason: String,
}

impl Verdict {
    pub fn equivalent(reason: impl Into<String>) -> Self {
        Verdict {
            equivalent: true,
            reason: reason.into(),
        }
    }

    pub fn inequivalent(reason: impl Into<String>) -> Self {
        Verdict {
            equivalent: false,
            reason: reason.into(),
        }
    }
}

fn check_univariate(f: &Series) -> Result<()> {
    if f.vars() != 1 {
        return Err(Error::VarCountMismatch {
            left: 1,
            right: f.vars(),
        });
    }
    Ok(())
}

/// Degree and coefficient of the leading nonlinear term of a series
/// tangent to the identity.
pub fn leading_term(f: &Series) -> Result<(u32, Scalar)> {
    check_univariate(f)?;
    if f.get(MultiIndex::ZERO).is_some() {
        return Err(Error::NonZeroConstant);
    }
    if !f.coeff1(1).is_one() {
        return Err(Error::NotTangentToIdentity);
    }
    f.tail_from(2)
        .terms()
        .next()
        .map(|(idx, c)| (idx.i(), c.clone()))
        .ok_or(Error::AlreadyLinear)
}

/// Reduces `f = x + O(x²)` to `f_{m,ρ,μ}`.
///
/// The conjugator coefficient `h_k` is the only unknown in degree
/// `k+m−1`, where it enters with factor `ρ(k−m)`. At `k = m` that factor
/// vanishes; `h_m` is set to 0 and the leftover degree-`2m−1` coefficient
/// is recorded as μ.
pub fn normal_form_1d(f: &Series) -> Result<OneDReduction> {
    let (m, rho) = leading_term(f)?;
    let n = f.truncation();
    if 2 * m - 1 > n {
        return Err(Error::InsufficientTruncation {
            needed: 2 * m - 1,
            have: n,
        });
    }
    let mut form = OneDNormalForm {
        m,
        rho: rho.clone(),
        mu: Scalar::zero(),
    };
    let mut h = Series::var(1, n, 0);
    for d in (m + 1)..=n {
        let k = d - m + 1;
        let lhs = h.substitute(f)?;
        let rhs = form.series(n).substitute(&h)?;
        let r = lhs.coeff1(d) - rhs.coeff1(d);
        if k == m {
            form.mu = r;
        } else if !r.is_zero() {
            let factor = &rho * Scalar::from_int(i64::from(k) - i64::from(m));
            h.set(MultiIndex::univariate(k), -(r / factor));
        }
    }
    Ok(OneDReduction { form, conjugator: h })
}

/// Decides formal equivalence of two normal forms: `m = m'`, `ρ/ρ'` is an
/// `(m−1)`-th power and `μ = μ'(ρ/ρ')²`.
pub fn equiv_forms_1d(a: &OneDNormalForm, b: &OneDNormalForm, ctx: &PrimeContext) -> Result<Verdict> {
    if a.m != b.m {
        return Ok(Verdict::inequivalent(format!("m differs: {} vs {}", a.m, b.m)));
    }
    let ratio = &a.rho / &b.rho;
    if !ctx.is_jth_power(&ratio, u64::from(a.m - 1))? {
        return Ok(Verdict::inequivalent(format!(
            "rho ratio {ratio} is not a {}-th power in Q_{}",
            a.m - 1,
            ctx.p()
        )));
    }
    if a.mu != &b.mu * &ratio * &ratio {
        return Ok(Verdict::inequivalent(format!(
            "mu mismatch: {} vs {}·({ratio})²",
            a.mu, b.mu
        )));
    }
    Ok(Verdict::equivalent(format!("m = {}, rho ratio {ratio}", a.m)))
}

pub fn equiv_1d(f: &Series, g: &Series, ctx: &PrimeContext) -> Result<Verdict> {
    let a = normal_form_1d(f)?;
    let b = normal_form_1d(g)?;
    equiv_forms_1d(&a.form, &b.form, ctx)
}

/// Compositional inverse of a one-variable series with invertible linear term.
pub fn series_inverse(h: &Series) -> Result<Series> {
    check_univariate(h)?;
    let map = FormalMap::from_components(vec![h.clone()])?;
    Ok(map.inverse()?.component(0))
}

/// `k∘f∘k^{-1}`.
pub fn conjugate_1d(f: &Series, k: &Series) -> Result<Series> {
    k.substitute(f)?.substitute(&series_inverse(k)?)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Centralizer {
    /// `h` commutes with `f`, `h ≡ ζx mod x^m` and `ζ^(m−1) = 1`.
    Commutes { zeta: Scalar },
    /// Lowest degree where `h∘f − f∘h` is nonzero.
    Violation { degree: u32 },
}

/// Checks whether `h` commutes with `f = x + Ax^m + …` through the
/// truncation; a commuting `h` must be a root of unity times `x` modulo `x^m`.
pub fn leading_centralizer(h: &Series, f: &Series) -> Result<Centralizer> {
    check_univariate(h)?;
    let (m, _) = leading_term(f)?;
    let zeta = h.coeff1(1);
    if zeta.is_zero() {
        return Err(Error::ZeroEigenvalue);
    }
    let diff = h.substitute(f)?.sub(&f.substitute(h)?)?;
    if let Some(d) = diff.order() {
        return Ok(Centralizer::Violation { degree: d });
    }
    let low_terms_ok = h.tail_from(2).terms().all(|(idx, _)| idx.i() >= m);
    if !low_terms_ok || !zeta.powi(i64::from(m) - 1).is_one() {
        return Err(Error::CertificateViolation(format!(
            "commuting h = {h} is not a root of unity mod x^{m}"
        )));
    }
    Ok(Centralizer::Commutes { zeta })
}
