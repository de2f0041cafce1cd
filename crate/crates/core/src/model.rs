//! SEIR(D) compartment model: state and parameter types, the right-hand side
//! `F(U, θ)`, its sensitivities, the Hamiltonian `V·F`, threshold numbers and
//! the normalized fraction system.
//!
//! The living population is `N = S + E + I + R`; deaths are tracked in `D`
//! and never re-enter `N`. With recruitment and natural birth/death switched
//! off, `S + E + I + R + D` is conserved.

use std::fmt;

use crate::error::{ensure_finite, Error, Result};

/// Compartment sizes `[S, E, I, R, D]` at one time point, in persons.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateVec {
    pub s: f64,
    pub e: f64,
    pub i: f64,
    pub r: f64,
    pub d: f64,
}

impl StateVec {
    pub const fn new(s: f64, e: f64, i: f64, r: f64, d: f64) -> Self {
        Self { s, e, i, r, d }
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4])
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.s, self.e, self.i, self.r, self.d]
    }

    /// `N = S + E + I + R`.
    pub fn living(&self) -> f64 {
        self.s + self.e + self.i + self.r
    }

    /// Sum of all five compartments, the conserved quantity when demography is off.
    pub fn total(&self) -> f64 {
        self.living() + self.d
    }

    /// Checks finiteness, non-negativity and a positive living population.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in ["S", "E", "I", "R", "D"].iter().zip(self.to_array()) {
            ensure_finite(v, name)?;
            if v < 0.0 {
                return Err(Error::Domain(format!("{name} is negative ({v})")));
            }
        }
        if self.living() <= 0.0 {
            return Err(Error::Domain(format!(
                "living population must be positive (N = {})",
                self.living()
            )));
        }
        Ok(())
    }
}

/// One of the four rate parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Param {
    Beta,
    Epsilon,
    Gamma,
    Mu,
}

impl Param {
    pub const ALL: [Param; 4] = [Param::Beta, Param::Epsilon, Param::Gamma, Param::Mu];

    pub fn name(self) -> &'static str {
        match self {
            Param::Beta => "beta",
            Param::Epsilon => "epsilon",
            Param::Gamma => "gamma",
            Param::Mu => "mu",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Rate parameters `θ = [β, ε, γ, μ]`, all per day.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ParamVec {
    /// Effective contact rate.
    pub beta: f64,
    /// Exposed to infectious transition rate (1 / incubation period).
    pub epsilon: f64,
    /// Recovery rate (1 / infectious period).
    pub gamma: f64,
    /// Virus-related death rate.
    pub mu: f64,
}

impl ParamVec {
    pub const fn new(beta: f64, epsilon: f64, gamma: f64, mu: f64) -> Self {
        Self {
            beta,
            epsilon,
            gamma,
            mu,
        }
    }

    pub const fn splat(v: f64) -> Self {
        Self::new(v, v, v, v)
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.beta, self.epsilon, self.gamma, self.mu]
    }

    pub fn get(&self, p: Param) -> f64 {
        self.to_array()[p.index()]
    }

    pub fn set(&mut self, p: Param, value: f64) {
        match p {
            Param::Beta => self.beta = value,
            Param::Epsilon => self.epsilon = value,
            Param::Gamma => self.gamma = value,
            Param::Mu => self.mu = value,
        }
    }

    pub fn map(self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_array(self.to_array().map(f))
    }

    pub fn zip_with(self, other: Self, f: impl Fn(f64, f64) -> f64) -> Self {
        let a = self.to_array();
        let b = other.to_array();
        Self::new(f(a[0], b[0]), f(a[1], b[1]), f(a[2], b[2]), f(a[3], b[3]))
    }

    pub fn validate(&self) -> Result<()> {
        for p in Param::ALL {
            let v = self.get(p);
            ensure_finite(v, p.name())?;
            if v < 0.0 {
                return Err(Error::Domain(format!("{p} is negative ({v})")));
            }
        }
        Ok(())
    }
}

/// Componentwise box `lower ≤ θ ≤ upper` of admissible parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBounds {
    pub lower: ParamVec,
    pub upper: ParamVec,
}

impl Default for ParamBounds {
    /// `0 ≤ β ≤ 5`, `0.2 ≤ ε ≤ 0.25`, `0.1 ≤ γ ≤ 0.2`, `0 ≤ μ ≤ 0.01`.
    fn default() -> Self {
        Self {
            lower: ParamVec::new(0.0, 0.2, 0.1, 0.0),
            upper: ParamVec::new(5.0, 0.25, 0.2, 0.01),
        }
    }
}

impl ParamBounds {
    pub fn new(lower: ParamVec, upper: ParamVec) -> Result<Self> {
        let b = Self { lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        self.lower.validate()?;
        self.upper.validate()?;
        for p in Param::ALL {
            if self.lower.get(p) > self.upper.get(p) {
                return Err(Error::Config(format!(
                    "lower bound of {p} ({}) exceeds upper bound ({})",
                    self.lower.get(p),
                    self.upper.get(p)
                )));
            }
        }
        Ok(())
    }

    /// Projection onto the box.
    pub fn clip(&self, theta: ParamVec) -> ParamVec {
        let lo = self.lower.to_array();
        let hi = self.upper.to_array();
        let mut t = theta.to_array();
        for c in 0..4 {
            t[c] = t[c].clamp(lo[c], hi[c]);
        }
        ParamVec::from_array(t)
    }

    pub fn contains(&self, theta: &ParamVec) -> bool {
        Param::ALL
            .iter()
            .all(|&p| theta.get(p) >= self.lower.get(p) && theta.get(p) <= self.upper.get(p))
    }

    pub fn midpoint(&self) -> ParamVec {
        self.lower.zip_with(self.upper, |a, b| 0.5 * (a + b))
    }
}

/// Recruitment `A` (persons/day), birth rate `b` and natural death rate `d` (1/day).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DemographyParams {
    pub recruitment: f64,
    pub birth: f64,
    pub death: f64,
}

/// Co-state `[V_S, V_E, V_I, V_R, V_D]`; sign-unrestricted.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostateVec {
    pub s: f64,
    pub e: f64,
    pub i: f64,
    pub r: f64,
    pub d: f64,
}

impl CostateVec {
    pub const ZERO: CostateVec = CostateVec::new(0.0, 0.0, 0.0, 0.0, 0.0);

    pub const fn new(s: f64, e: f64, i: f64, r: f64, d: f64) -> Self {
        Self { s, e, i, r, d }
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4])
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.s, self.e, self.i, self.r, self.d]
    }

    pub fn max_abs(&self) -> f64 {
        self.to_array().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

impl std::ops::Add for CostateVec {
    type Output = CostateVec;

    fn add(self, rhs: CostateVec) -> CostateVec {
        let a = self.to_array();
        let b = rhs.to_array();
        CostateVec::new(a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3], a[4] + b[4])
    }
}

/// Fractions `(s, e, i)` of the living population; `r = 1 - s - e - i`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FractionState {
    pub s: f64,
    pub e: f64,
    pub i: f64,
}

/// Slack allowed when checking membership of the simplex `Σ`.
pub const SIMPLEX_TOLERANCE: f64 = 1e-12;

impl FractionState {
    pub const fn new(s: f64, e: f64, i: f64) -> Self {
        Self { s, e, i }
    }

    pub fn r(&self) -> f64 {
        1.0 - self.s - self.e - self.i
    }

    pub fn in_simplex(&self, tol: f64) -> bool {
        self.s >= -tol && self.e >= -tol && self.i >= -tol && self.s + self.e + self.i <= 1.0 + tol
    }
}

/// `F(U, θ)` with demography terms.
pub fn seir_rhs(u: &StateVec, theta: &ParamVec, demo: &DemographyParams) -> Result<StateVec> {
    u.validate()?;
    theta.validate()?;
    for (name, v) in [("A", demo.recruitment), ("b", demo.birth), ("d", demo.death)] {
        ensure_finite(v, name)?;
        if v < 0.0 {
            return Err(Error::Domain(format!("{name} is negative ({v})")));
        }
    }
    let n = u.living();
    let incidence = theta.beta * u.s * u.i / n;
    let d = demo.death;
    Ok(StateVec::new(
        demo.recruitment - incidence - d * u.s,
        incidence - theta.epsilon * u.e - d * u.e,
        theta.epsilon * u.e - (theta.mu + theta.gamma + d) * u.i,
        theta.gamma * u.i - d * u.r,
        theta.mu * u.i,
    ))
}

/// Row-major 5×5 matrix, `m[row][col] = ∂F_row/∂U_col`.
pub type StateJacobian = [[f64; 5]; 5];

/// Row-major 5×4 matrix, `m[row][col] = ∂F_row/∂θ_col`.
pub type ParamJacobian = [[f64; 4]; 5];

/// Exact `∇_U F` of [`seir_rhs`] (demography off). The incidence `βSI/N`
/// is differentiated through every living compartment, so the `E` and `R`
/// columns carry `±βSI/N²` in the `S` and `E` rows.
pub fn jacobian_state(u: &StateVec, theta: &ParamVec) -> Result<StateJacobian> {
    u.validate()?;
    theta.validate()?;
    let n = u.living();
    let n2 = n * n;
    let ParamVec {
        beta,
        epsilon,
        gamma,
        mu,
    } = *theta;
    // ∂(βSI/N) with respect to S, E, I, R
    let d_s = beta * u.i * (n - u.s) / n2;
    let d_e = -beta * u.s * u.i / n2;
    let d_i = beta * u.s * (n - u.i) / n2;
    let d_r = d_e;
    Ok([
        [-d_s, -d_e, -d_i, -d_r, 0.0],
        [d_s, d_e - epsilon, d_i, d_r, 0.0],
        [0.0, epsilon, -(mu + gamma), 0.0, 0.0],
        [0.0, 0.0, gamma, 0.0, 0.0],
        [0.0, 0.0, mu, 0.0, 0.0],
    ])
}

/// The linearization driving the co-state sweep. Identical to
/// [`jacobian_state`] except that the `E` and `R` dependence of the
/// incidence denominator is dropped, leaving `−βI(N−S)/N²` and
/// `−βS(N−I)/N²` as the only incidence sensitivities. The dropped entries
/// are `O(I/N)` relative to the retained ones.
pub fn costate_jacobian(u: &StateVec, theta: &ParamVec) -> Result<StateJacobian> {
    let mut j = jacobian_state(u, theta)?;
    j[0][1] = 0.0;
    j[0][3] = 0.0;
    j[1][1] = -theta.epsilon;
    j[1][3] = 0.0;
    Ok(j)
}

/// `∇_θ F`: columns `∂F/∂β, ∂F/∂ε, ∂F/∂γ, ∂F/∂μ`.
pub fn jacobian_params(u: &StateVec) -> Result<ParamJacobian> {
    u.validate()?;
    let si_n = u.s * u.i / u.living();
    Ok([
        [-si_n, 0.0, 0.0, 0.0],
        [si_n, -u.e, 0.0, 0.0],
        [0.0, u.e, -u.i, -u.i],
        [0.0, 0.0, u.i, 0.0],
        [0.0, 0.0, 0.0, u.i],
    ])
}

/// `H(U, V, θ) = V·F(U, θ)` with demography off. Linear in `θ`.
pub fn hamiltonian(u: &StateVec, v: &CostateVec, theta: &ParamVec) -> Result<f64> {
    u.validate()?;
    theta.validate()?;
    if !v.is_finite() {
        return Err(Error::Domain("co-state is not finite".into()));
    }
    let si_n = u.s * u.i / u.living();
    let ParamVec {
        beta,
        epsilon,
        gamma,
        mu,
    } = *theta;
    Ok(-v.s * beta * si_n
        + v.e * (beta * si_n - epsilon * u.e)
        + v.i * (epsilon * u.e - (gamma + mu) * u.i)
        + v.r * gamma * u.i
        + v.d * mu * u.i)
}

/// Basic reproduction number `β / (γ + μ)`.
pub fn r0(theta: &ParamVec) -> Result<f64> {
    let removal = theta.gamma + theta.mu;
    if removal <= 0.0 || !removal.is_finite() {
        return Err(Error::Domain(format!("R0 undefined: gamma + mu = {removal}")));
    }
    Ok(theta.beta / removal)
}

/// Modified contact number `σ = βε / ((ε + b)(γ + μ + b))`.
pub fn sigma(theta: &ParamVec, birth: f64) -> Result<f64> {
    let denom = (theta.epsilon + birth) * (theta.gamma + theta.mu + birth);
    if denom <= 0.0 || !denom.is_finite() {
        return Err(Error::Domain(format!(
            "contact number undefined: denominator {denom}"
        )));
    }
    Ok(theta.beta * theta.epsilon / denom)
}

/// Right-hand side of the normalized system for `(s, e, i)` with birth rate `b`
/// and recruitment `A = bN`.
pub fn fraction_rhs(x: &FractionState, theta: &ParamVec, birth: f64) -> Result<FractionState> {
    if !x.in_simplex(SIMPLEX_TOLERANCE) {
        return Err(Error::Domain(format!(
            "fraction state ({}, {}, {}) lies outside the simplex",
            x.s, x.e, x.i
        )));
    }
    let ParamVec {
        beta,
        epsilon,
        gamma,
        mu,
    } = *theta;
    let b = birth;
    let FractionState { s, e, i } = *x;
    Ok(FractionState::new(
        b - b * s - beta * i * s + mu * i * s,
        beta * i * s - (epsilon + b) * e + mu * i * e,
        epsilon * e - (mu + gamma + b) * i + mu * i * i,
    ))
}

/// Classical RK4 integration of [`fraction_rhs`] with fixed step `h`,
/// returning `steps + 1` states starting at `x0`.
///
/// Intermediate stages may leave `Σ` by rounding; they are evaluated
/// without the membership check.
pub fn integrate_fractions(
    x0: FractionState,
    theta: &ParamVec,
    birth: f64,
    h: f64,
    steps: usize,
) -> Result<Vec<FractionState>> {
    if !(h > 0.0) {
        return Err(Error::Domain(format!("step size must be positive ({h})")));
    }
    fraction_rhs(&x0, theta, birth)?;
    let f = |x: FractionState| {
        let ParamVec {
            beta,
            epsilon,
            gamma,
            mu,
        } = *theta;
        let b = birth;
        FractionState::new(
            b - b * x.s - beta * x.i * x.s + mu * x.i * x.s,
            beta * x.i * x.s - (epsilon + b) * x.e + mu * x.i * x.e,
            epsilon * x.e - (mu + gamma + b) * x.i + mu * x.i * x.i,
        )
    };
    let axpy = |x: FractionState, a: f64, k: FractionState| {
        FractionState::new(x.s + a * k.s, x.e + a * k.e, x.i + a * k.i)
    };
    let mut out = Vec::with_capacity(steps + 1);
    let mut x = x0;
    out.push(x);
    for _ in 0..steps {
        let k1 = f(x);
        let k2 = f(axpy(x, 0.5 * h, k1));
        let k3 = f(axpy(x, 0.5 * h, k2));
        let k4 = f(axpy(x, h, k3));
        x = FractionState::new(
            x.s + h / 6.0 * (k1.s + 2.0 * k2.s + 2.0 * k3.s + k4.s),
            x.e + h / 6.0 * (k1.e + 2.0 * k2.e + 2.0 * k3.e + k4.e),
            x.i + h / 6.0 * (k1.i + 2.0 * k2.i + 2.0 * k3.i + k4.i),
        );
        out.push(x);
    }
    Ok(out)
}
