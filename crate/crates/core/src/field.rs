//! Exact rationals with a p-adic valuation attached.
//!
//! The base field is ℚ carrying the p-adic absolute value. Every algorithm
//! in this crate uses field operations only, so rational inputs stay
//! rational and every valuation is exact. Norms are stored as
//! `(p, exponent)` pairs and never as floats.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Pow, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// An exact rational number, always stored in lowest terms with a positive
/// denominator.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scalar(BigRational);

impl Scalar {
    pub fn zero() -> Self {
        Scalar(BigRational::zero())
    }

    pub fn one() -> Self {
        Scalar(BigRational::one())
    }

    pub fn from_int(n: i64) -> Self {
        Scalar(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn from_bigint(n: BigInt) -> Self {
        Scalar(BigRational::from_integer(n))
    }

    /// `num/den`, reduced. Panics on a zero denominator.
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Scalar(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn from_ratio(num: BigInt, den: BigInt) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::Parse("zero denominator".into()));
        }
        Ok(Scalar(BigRational::new(num, den)))
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn recip(&self) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::Domain("reciprocal of zero".into()));
        }
        Ok(Scalar(self.0.recip()))
    }

    /// Integer power; negative exponents require a nonzero base.
    pub fn powi(&self, e: i64) -> Self {
        if e >= 0 {
            Scalar(Pow::pow(&self.0, e as u64))
        } else {
            assert!(!self.is_zero(), "negative power of zero");
            Scalar(Pow::pow(&self.0.recip(), e.unsigned_abs()))
        }
    }

    pub fn abs(&self) -> Self {
        Scalar(self.0.abs())
    }

    pub fn as_rational(&self) -> &BigRational {
        &self.0
    }
}

impl Default for Scalar {
    fn default() -> Self {
        Scalar::zero()
    }
}

impl From<i64> for Scalar {
    fn from(n: i64) -> Self {
        Scalar::from_int(n)
    }
}

impl From<BigRational> for Scalar {
    fn from(r: BigRational) -> Self {
        Scalar(r)
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Scalar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Parse(format!("invalid rational {s:?}"));
        match s.split_once('/') {
            Some((n, d)) => {
                let n = BigInt::from_str(n.trim()).map_err(|_| bad())?;
                let d = BigInt::from_str(d.trim()).map_err(|_| bad())?;
                Scalar::from_ratio(n, d)
            }
            None => Ok(Scalar::from_bigint(BigInt::from_str(s).map_err(|_| bad())?)),
        }
    }
}

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Str(String),
            Int(i64),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
            Repr::Int(n) => Ok(Scalar::from_int(n)),
        }
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident) => {
        impl $trait<&Scalar> for &Scalar {
            type Output = Scalar;
            fn $method(self, rhs: &Scalar) -> Scalar {
                Scalar((&self.0).$method(&rhs.0))
            }
        }
        impl $trait<Scalar> for Scalar {
            type Output = Scalar;
            fn $method(self, rhs: Scalar) -> Scalar {
                Scalar(self.0.$method(rhs.0))
            }
        }
        impl $trait<&Scalar> for Scalar {
            type Output = Scalar;
            fn $method(self, rhs: &Scalar) -> Scalar {
                Scalar(self.0.$method(&rhs.0))
            }
        }
        impl $trait<Scalar> for &Scalar {
            type Output = Scalar;
            fn $method(self, rhs: Scalar) -> Scalar {
                Scalar((&self.0).$method(rhs.0))
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);
forward_binop!(Div, div);

impl AddAssign<&Scalar> for Scalar {
    fn add_assign(&mut self, rhs: &Scalar) {
        self.0 += &rhs.0;
    }
}

impl SubAssign<&Scalar> for Scalar {
    fn sub_assign(&mut self, rhs: &Scalar) {
        self.0 -= &rhs.0;
    }
}

impl MulAssign<&Scalar> for Scalar {
    fn mul_assign(&mut self, rhs: &Scalar) {
        self.0 *= &rhs.0;
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar(-self.0)
    }
}

impl Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar(-&self.0)
    }
}

/// p-adic valuation: an integer, or +∞ for zero.
///
/// The derived ordering puts every finite value below `Infinite`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Valuation {
    Finite(i64),
    Infinite,
}

impl Valuation {
    pub fn finite(self) -> Option<i64> {
        match self {
            Valuation::Finite(v) => Some(v),
            Valuation::Infinite => None,
        }
    }

    pub fn is_nonnegative(self) -> bool {
        self >= Valuation::Finite(0)
    }
}

impl Add for Valuation {
    type Output = Valuation;
    fn add(self, rhs: Valuation) -> Valuation {
        match (self, rhs) {
            (Valuation::Finite(a), Valuation::Finite(b)) => Valuation::Finite(a + b),
            _ => Valuation::Infinite,
        }
    }
}

impl fmt::Display for Valuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Valuation::Finite(v) => write!(f, "{v}"),
            Valuation::Infinite => write!(f, "inf"),
        }
    }
}

/// `|x| = base^exponent`; `exponent == None` encodes `|0| = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NormValue {
    pub base: u64,
    pub exponent: Option<i64>,
}

impl NormValue {
    pub fn from_valuation(base: u64, v: Valuation) -> Self {
        NormValue {
            base,
            exponent: v.finite().map(|v| -v),
        }
    }

    pub fn one(base: u64) -> Self {
        NormValue {
            base,
            exponent: Some(0),
        }
    }
}

impl PartialOrd for NormValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for NormValue {
    fn cmp(&self, other: &Self) -> Ordering {
        debug_assert_eq!(self.base, other.base, "norms over different primes");
        match (self.exponent, other.exponent) {
            (None, None) => Ordering::Equal,
            (None, Some(_)) => Ordering::Less,
            (Some(_), None) => Ordering::Greater,
            (Some(a), Some(b)) => a.cmp(&b),
        }
    }
}

impl Mul for NormValue {
    type Output = NormValue;
    fn mul(self, rhs: NormValue) -> NormValue {
        debug_assert_eq!(self.base, rhs.base);
        NormValue {
            base: self.base,
            exponent: match (self.exponent, rhs.exponent) {
                (Some(a), Some(b)) => Some(a + b),
                _ => None,
            },
        }
    }
}

impl fmt::Display for NormValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.exponent {
            Some(e) => write!(f, "{}^{}", self.base, e),
            None => write!(f, "0"),
        }
    }
}

/// Solution class of the discrete-log congruences for a root of unity:
/// `ζ = g^t` for every `t ≡ residue (mod modulus)`, where `g` generates the
/// cyclic group of roots of unity in ℚ_p, of order `group_order`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZetaClass {
    pub residue: u64,
    pub modulus: u64,
    pub group_order: u64,
}

impl ZetaClass {
    /// The sign of ζ^k for any member of the class, or `None` when the class
    /// does not pin ζ^k down to ±1.
    pub fn power_sign(&self, k: u64) -> Option<i64> {
        let m = self.group_order;
        // ζ^k = g^(k t); it is ±1 exactly when k t mod m ∈ {0, m/2} for all t in the class.
        let step = (k as u128 * self.modulus as u128 % m as u128) as u64;
        let base = (k as u128 * self.residue as u128 % m as u128) as u64;
        let half = m / 2;
        let allowed = |x: u64| x == 0 || (m.is_multiple_of(2) && x == half);
        if step != 0 {
            return None;
        }
        if !allowed(base) {
            return None;
        }
        Some(if base == 0 { 1 } else { -1 })
    }
}

/// The class of `c ∈ ℚ_p^×` solving `c^k = target_k` for a set of
/// exponents: every solution satisfies `c^exponent = value`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PowerClass {
    pub exponent: u64,
    pub value: Scalar,
}

/// A prime `p` together with the constant α = 1/p of the factorial bound
/// `|n!| ≥ αⁿ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct PrimeContext {
    p: u64,
}

impl TryFrom<u64> for PrimeContext {
    type Error = Error;
    fn try_from(p: u64) -> Result<Self> {
        PrimeContext::new(p)
    }
}

impl From<PrimeContext> for u64 {
    fn from(ctx: PrimeContext) -> u64 {
        ctx.p
    }
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3u64;
    while d.saturating_mul(d) <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// Splits `n = p^v · m` with `p ∤ m`, `n ≠ 0`.
fn split_prime_power(n: &BigInt, p: &BigInt) -> (i64, BigInt) {
    let mut v = 0;
    let mut m = n.clone();
    loop {
        let (q, r) = m.div_rem(p);
        if !r.is_zero() {
            return (v, m);
        }
        m = q;
        v += 1;
    }
}

fn mod_floor_big(a: &BigInt, m: &BigUint) -> BigUint {
    let m_int = BigInt::from_biguint(Sign::Plus, m.clone());
    a.mod_floor(&m_int).to_biguint().expect("mod_floor is nonnegative")
}

fn mod_inverse(a: &BigInt, m: &BigUint) -> Option<BigUint> {
    let m_int = BigInt::from_biguint(Sign::Plus, m.clone());
    let eg = a.mod_floor(&m_int).extended_gcd(&m_int);
    if !eg.gcd.is_one() {
        return None;
    }
    Some(mod_floor_big(&eg.x, m))
}

fn gcd_u64(a: u64, b: u64) -> u64 {
    a.gcd(&b)
}

/// Solves `a·t ≡ b (mod m)`, returning `(t0, m')` with all solutions
/// `t ≡ t0 (mod m')`.
fn solve_linear_congruence(a: u64, b: u64, m: u64) -> Option<(u64, u64)> {
    let a = a % m;
    let b = b % m;
    let g = gcd_u64(a, m);
    if !b.is_multiple_of(g) {
        return None;
    }
    let m2 = m / g;
    if m2 == 1 {
        return Some((0, 1));
    }
    let a2 = (a / g) as i128;
    let eg = a2.extended_gcd(&(m2 as i128));
    let inv = eg.x.rem_euclid(m2 as i128);
    let t0 = ((b / g) as i128 * inv).rem_euclid(m2 as i128);
    Some((t0 as u64, m2))
}

/// Intersects `t ≡ r1 (mod m1)` and `t ≡ r2 (mod m2)`.
fn combine_congruences(r1: u64, m1: u64, r2: u64, m2: u64) -> Option<(u64, u64)> {
    let g = gcd_u64(m1, m2);
    let diff = r2 as i128 - r1 as i128;
    if diff.rem_euclid(g as i128) != 0 {
        return None;
    }
    let lcm = (m1 / g) as i128 * m2 as i128;
    // r1 + m1 * k ≡ r2 (mod m2)  ⇔  (m1/g) k ≡ diff/g (mod m2/g)
    let m2g = (m2 / g) as i128;
    let k = if m2g == 1 {
        0
    } else {
        let inv = ((m1 / g) as i128).extended_gcd(&m2g).x.rem_euclid(m2g);
        ((diff / g as i128).rem_euclid(m2g) * inv).rem_euclid(m2g)
    };
    let r = (r1 as i128 + m1 as i128 * k).rem_euclid(lcm);
    Some((r as u64, lcm as u64))
}

impl PrimeContext {
    pub fn new(p: u64) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::NotPrime(p));
        }
        Ok(PrimeContext { p })
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    fn p_big(&self) -> BigInt {
        BigInt::from(self.p)
    }

    /// The norm bound α = 1/p as a norm value `p^-1`.
    pub fn alpha(&self) -> NormValue {
        NormValue {
            base: self.p,
            exponent: Some(-1),
        }
    }

    pub fn valuation(&self, x: &Scalar) -> Valuation {
        if x.is_zero() {
            return Valuation::Infinite;
        }
        let p = self.p_big();
        let (vn, _) = split_prime_power(x.numer(), &p);
        let (vd, _) = split_prime_power(x.denom(), &p);
        Valuation::Finite(vn - vd)
    }

    /// Finite valuation of a nonzero scalar.
    pub fn val(&self, x: &Scalar) -> Option<i64> {
        self.valuation(x).finite()
    }

    pub fn norm(&self, x: &Scalar) -> NormValue {
        NormValue::from_valuation(self.p, self.valuation(x))
    }

    /// Membership in the ring of integers Δ = {|x| ≤ 1}.
    pub fn is_integral(&self, x: &Scalar) -> bool {
        self.valuation(x).is_nonnegative()
    }

    /// Legendre's formula: `v_p(n!) = Σ ⌊n/pⁱ⌋`.
    pub fn factorial_valuation(&self, n: u64) -> u64 {
        let mut total = 0;
        let mut q = n;
        while q > 0 {
            q /= self.p;
            total += q;
        }
        total
    }

    /// `|n!|_p ≥ (1/p)ⁿ`, i.e. `v_p(n!) ≤ n`.
    pub fn factorial_bound_check(&self, n: u64) -> bool {
        self.factorial_valuation(n) <= n
    }

    /// Decides whether `x` is a j-th power in ℚ_p^×.
    ///
    /// Requires `v_p(x) ≡ 0 (mod j)` and that the unit part is a j-th power
    /// modulo `p^(1 + 2 v_p(j))`, which Hensel lifting makes sufficient.
    pub fn is_jth_power(&self, x: &Scalar, j: u64) -> Result<bool> {
        if x.is_zero() {
            return Err(Error::Domain("zero has no j-th power class".into()));
        }
        if j == 0 {
            return Err(Error::Domain("j must be at least 1".into()));
        }
        if j == 1 {
            return Ok(true);
        }
        let p = self.p_big();
        let (vn, un) = split_prime_power(x.numer(), &p);
        let (vd, ud) = split_prime_power(x.denom(), &p);
        let v = vn - vd;
        if v.rem_euclid(j as i64) != 0 {
            return Ok(false);
        }
        let vj = {
            let mut n = j;
            let mut c = 0u32;
            while n.is_multiple_of(self.p) {
                n /= self.p;
                c += 1;
            }
            c
        };
        let e = 1 + 2 * vj;
        let modulus = BigUint::from(self.p).pow(e);
        let inv = mod_inverse(&ud, &modulus).expect("unit part is invertible");
        let u = (mod_floor_big(&un, &modulus) * inv) % &modulus;
        Ok(self.is_jth_power_mod_prime_power(&u, j, e))
    }

    /// Whether the unit `u` is a j-th power in `(ℤ/p^e)^×`.
    fn is_jth_power_mod_prime_power(&self, u: &BigUint, j: u64, e: u32) -> bool {
        let modulus = BigUint::from(self.p).pow(e);
        if self.p == 2 {
            if j % 2 == 1 {
                // x ↦ x^j permutes (ℤ/2^e)^× for odd j.
                return true;
            }
            // e = 1 + 2v ≥ 3 here. (ℤ/2^e)^× = {±1} × ⟨5⟩ and the j-th powers form
            // ⟨5^(2^v)⟩ = {u ≡ 1 mod 2^(v+2)}.
            let v = j.trailing_zeros();
            let m = BigUint::one() << (v + 2).min(e);
            return (u % m) == BigUint::one();
        }
        // Odd p: (ℤ/p^e)^× is cyclic of order φ = p^(e-1)(p-1).
        let phi = BigUint::from(self.p).pow(e - 1) * BigUint::from(self.p - 1);
        let g = BigUint::from(j).gcd(&phi);
        u.modpow(&(&phi / &g), &modulus).is_one()
    }

    /// Order of the group of roots of unity in ℚ_p.
    pub fn roots_of_unity_order(&self) -> u64 {
        if self.p == 2 {
            2
        } else {
            self.p - 1
        }
    }

    /// Finds the roots of unity ζ ∈ ℚ_p with `ζ^order_divisor = 1` and
    /// `ζ^k = ratio_k` for every constraint, as a discrete-log class.
    ///
    /// Each ratio must be ±1; any other rational ratio cannot be a power of a
    /// root of unity and yields [`Error::NonUnitRatio`].
    pub fn solve_zeta_constraints(
        &self,
        constraints: &[(u64, Scalar)],
        order_divisor: u64,
    ) -> Result<Option<ZetaClass>> {
        if order_divisor == 0 {
            return Err(Error::Domain("order divisor must be at least 1".into()));
        }
        let m = self.roots_of_unity_order();
        let minus_one = Scalar::from_int(-1);
        let mut class = solve_linear_congruence(order_divisor, 0, m);
        for (k, ratio) in constraints {
            let rhs = if ratio.is_one() {
                0
            } else if *ratio == minus_one {
                m / 2
            } else {
                return Err(Error::NonUnitRatio(ratio.to_string()));
            };
            if *k == 0 {
                // ζ^0 = 1 always.
                if rhs != 0 {
                    return Ok(None);
                }
                continue;
            }
            let Some((r1, m1)) = class else {
                return Ok(None);
            };
            class = solve_linear_congruence(*k, rhs, m).and_then(|(r2, m2)| combine_congruences(r1, m1, r2, m2));
        }
        Ok(class.map(|(residue, modulus)| ZetaClass {
            residue,
            modulus,
            group_order: m,
        }))
    }

    /// Decides whether some `c ∈ ℚ_p^×` satisfies `c^k = target_k` for all
    /// constraints.
    ///
    /// With `g = gcd(k)` and a Bézout combination `Σ u_k k = g`, any solution
    /// has `c^g = w := Π target_k^(u_k)`; the system is solvable iff every
    /// `target_k = w^(k/g)` and `w` is a g-th power.
    pub fn solve_power_constraints(&self, constraints: &[(u64, Scalar)]) -> Result<Option<PowerClass>> {
        let mut g: i64 = 0;
        let mut w = Scalar::one();
        for (k, target) in constraints {
            if target.is_zero() {
                return Err(Error::Domain("power constraint with zero target".into()));
            }
            let k = *k as i64;
            if k == 0 {
                if !target.is_one() {
                    return Ok(None);
                }
                continue;
            }
            if g == 0 {
                g = k;
                w = target.clone();
                continue;
            }
            let eg = g.extended_gcd(&k);
            // new g = x·g + y·k, so c^new_g = w^x · target^y.
            w = w.powi(eg.x) * target.powi(eg.y);
            g = eg.gcd;
        }
        if g == 0 {
            return Ok(Some(PowerClass {
                exponent: 1,
                value: Scalar::one(),
            }));
        }
        for (k, target) in constraints {
            if *k == 0 {
                continue;
            }
            if w.powi(*k as i64 / g) != *target {
                return Ok(None);
            }
        }
        if !self.is_jth_power(&w, g as u64)? {
            return Ok(None);
        }
        Ok(Some(PowerClass {
            exponent: g as u64,
            value: w,
        }))
    }

    /// Smallest `s ≥ 0` with `s·weight ≥ -v_p(c)` for every `(weight, c)`;
    /// entries with zero weight or zero coefficient are skipped.
    pub fn integralizing_exponent<'a, I>(&self, weighted: I) -> u64
    where
        I: IntoIterator<Item = (u64, &'a Scalar)>,
    {
        let mut s: u64 = 0;
        for (w, c) in weighted {
            if w == 0 {
                continue;
            }
            if let Some(v) = self.val(c) {
                if v < 0 {
                    let need = (-v) as u64;
                    s = s.max(need.div_ceil(w));
                }
            }
        }
        s
    }

    /// `p^e` as a scalar (negative `e` gives `1/p^|e|`).
    pub fn prime_power(&self, e: i64) -> Scalar {
        Scalar::from_int(self.p as i64).powi(e)
    }
}

/// `v_p(n!)` by summing `v_p(i)` over `1..=n`.
pub fn factorial_valuation_direct(n: u64, ctx: &PrimeContext) -> u64 {
    (1..=n)
        .map(|i| {
            let mut c = 0;
            let mut m = i;
            while m % ctx.p() == 0 {
                m /= ctx.p();
                c += 1;
            }
            c
        })
        .sum()
}

/// Exact `n!` as a scalar.
pub fn factorial(n: u64) -> Scalar {
    let mut acc = BigInt::one();
    for i in 2..=n {
        acc *= BigInt::from(i);
    }
    Scalar::from_bigint(acc)
}
