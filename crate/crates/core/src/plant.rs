//! Timing-belt pulley drive with position-dependent belt stiffness.
//!
//! The carriage (mass `m`, position `y`) is pulled by a belt wrapped around a
//! motor pulley (inertia `J`, radius `r`, angle `φ`). The belt is lumped into a
//! single spring-damper whose stiffness depends on the normalized carriage
//! position `ρ = y / ℓ`:
//!
//! ```text
//! F     = k(ρ)·(r·φ − y) + d·(r·φ̇ − ẏ)
//! m·ÿ   = F
//! J·φ̈   = u − r·F            (u: motor torque)
//! k(ρ)  = 2·L·EA / (ρℓ·(2L − ρℓ)) + 100·sin(5ρ)
//! ```
//!
//! The input-output form of these equations contains `k(ρ)` inside the
//! differential operator, and `k(ρ)` does not commute with `d/dt`, so the plant
//! is always integrated in this state-space form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of samples used to check stiffness positivity at construction.
const POSITIVITY_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantParams {
    /// Carriage mass m (kg).
    pub mass: f64,
    /// Pulley inertia J (kg·m²).
    pub inertia: f64,
    /// Pulley radius (m).
    pub pulley_radius: f64,
    /// Belt damping d (N·s/m).
    pub damping: f64,
    /// Belt half-length parameter L (m).
    pub half_length: f64,
    /// Elasticity modulus times belt cross-section, E·A (N).
    pub ea: f64,
    /// Position scaling ℓ (m); ρ = y / ℓ.
    pub ell: f64,
    pub rho_min: f64,
    pub rho_max: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            mass: 0.1,
            inertia: 1e-5,
            pulley_radius: 0.01,
            damping: 5.0,
            half_length: 0.5,
            ea: 1000.0,
            ell: 1.0,
            rho_min: 0.1,
            rho_max: 0.9,
        }
    }
}

impl PlantParams {
    /// Checks every physical invariant, including positivity of `k(ρ)` on a
    /// dense grid over the admissible domain.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("plant.mass", self.mass),
            ("plant.inertia", self.inertia),
            ("plant.pulley_radius", self.pulley_radius),
            ("plant.half_length", self.half_length),
            ("plant.ea", self.ea),
            ("plant.ell", self.ell),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::param(name, value, "must be finite and > 0"));
            }
        }
        if !(self.damping.is_finite() && self.damping >= 0.0) {
            return Err(Error::param(
                "plant.damping",
                self.damping,
                "must be finite and >= 0",
            ));
        }
        if !(self.rho_min.is_finite() && self.rho_min > 0.0) {
            return Err(Error::param("plant.rho_min", self.rho_min, "must be > 0"));
        }
        let upper = self.rho_singular();
        if !(self.rho_max.is_finite() && self.rho_max < upper) {
            return Err(Error::param(
                "plant.rho_max",
                self.rho_max,
                format!("must be < 2L/ell = {upper}"),
            ));
        }
        if self.rho_min >= self.rho_max {
            return Err(Error::param(
                "plant.rho_min",
                self.rho_min,
                format!("must be < rho_max = {}", self.rho_max),
            ));
        }
        for i in 0..POSITIVITY_SAMPLES {
            let rho = self.rho_min
                + (self.rho_max - self.rho_min) * i as f64 / (POSITIVITY_SAMPLES - 1) as f64;
            let k = self.stiffness_unchecked(rho);
            if !(k.is_finite() && k > 0.0) {
                return Err(Error::param(
                    "plant.ea",
                    self.ea,
                    format!("stiffness k({rho:.4}) = {k:.4e} is not positive"),
                ));
            }
        }
        Ok(())
    }

    /// Upper singularity of the stiffness law, ρ = 2L/ℓ.
    pub fn rho_singular(&self) -> f64 {
        2.0 * self.half_length / self.ell
    }

    pub fn rho_span(&self) -> f64 {
        self.rho_max - self.rho_min
    }

    pub fn contains(&self, rho: f64) -> bool {
        rho >= self.rho_min && rho <= self.rho_max
    }

    pub fn check_rho(&self, rho: f64) -> Result<()> {
        if self.contains(rho) {
            Ok(())
        } else {
            Err(Error::Domain {
                rho,
                min: self.rho_min,
                max: self.rho_max,
            })
        }
    }

    /// Belt stiffness k(ρ) in N/m.
    pub fn stiffness(&self, rho: f64) -> Result<f64> {
        self.check_rho(rho)?;
        Ok(self.stiffness_unchecked(rho))
    }

    fn stiffness_unchecked(&self, rho: f64) -> f64 {
        let x = rho * self.ell;
        let two_l = 2.0 * self.half_length;
        two_l * self.ea / (x * (two_l - x)) + 100.0 * (5.0 * rho).sin()
    }

    /// Mass-equivalent feedforward parameter θ₁ = (J + m·r²)/r (kg·m).
    pub fn theta1(&self) -> f64 {
        let r = self.pulley_radius;
        (self.inertia + self.mass * r * r) / r
    }

    /// Snap feedforward parameter θ₂ = m·J/(r·k) for a given stiffness.
    pub fn theta2_for_stiffness(&self, k: f64) -> f64 {
        self.mass * self.inertia / (self.pulley_radius * k)
    }

    /// Exact parameters of the undamped, frozen-ρ inverse
    /// `u = d²/dt²(θ₁·y + θ₂(ρ)·ÿ)`.
    pub fn true_parameters(&self, rho: f64) -> Result<(f64, f64)> {
        let k = self.stiffness(rho)?;
        Ok((self.theta1(), self.theta2_for_stiffness(k)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState {
    pub y: f64,
    pub y_dot: f64,
    pub phi: f64,
    pub phi_dot: f64,
}

impl PlantState {
    /// Rest state with an unstretched belt at carriage position `y`.
    pub fn equilibrium(y: f64, params: &PlantParams) -> Self {
        Self {
            y,
            y_dot: 0.0,
            phi: y / params.pulley_radius,
            phi_dot: 0.0,
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.y, self.y_dot, self.phi, self.phi_dot]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            y: a[0],
            y_dot: a[1],
            phi: a[2],
            phi_dot: a[3],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.to_array()
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }
}

/// How the belt stiffness is evaluated during simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StiffnessLaw {
    /// `k(ρ)` re-evaluated at the current carriage position.
    PositionDependent,
    /// Constant stiffness (N/m); no domain check on the carriage position.
    Frozen(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Any state component above this magnitude aborts the simulation.
    pub max_abs_state: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { max_abs_state: 1e6 }
    }
}

/// Validated plant: parameters plus the stiffness law used by the simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plant {
    params: PlantParams,
    law: StiffnessLaw,
}

impl Plant {
    pub fn new(params: PlantParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            law: StiffnessLaw::PositionDependent,
        })
    }

    /// Plant with `k` held constant, e.g. at `k(ρ₀)`.
    pub fn with_frozen_stiffness(params: PlantParams, k: f64) -> Result<Self> {
        params.validate()?;
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::param("stiffness", k, "frozen stiffness must be > 0"));
        }
        Ok(Self {
            params,
            law: StiffnessLaw::Frozen(k),
        })
    }

    pub fn params(&self) -> &PlantParams {
        &self.params
    }

    pub fn law(&self) -> StiffnessLaw {
        self.law
    }

    /// Stiffness seen by the belt at carriage position `y`.
    pub fn stiffness_at(&self, y: f64) -> Result<f64> {
        match self.law {
            StiffnessLaw::PositionDependent => self.params.stiffness(y / self.params.ell),
            StiffnessLaw::Frozen(k) => Ok(k),
        }
    }

    /// Feedforward parameters the plant actually needs at `rho`.
    pub fn true_parameters(&self, rho: f64) -> Result<(f64, f64)> {
        match self.law {
            StiffnessLaw::PositionDependent => self.params.true_parameters(rho),
            StiffnessLaw::Frozen(k) => {
                self.params.check_rho(rho)?;
                Ok((self.params.theta1(), self.params.theta2_for_stiffness(k)))
            }
        }
    }

    /// Belt force F = k·(rφ − y) + d·(rφ̇ − ẏ).
    pub fn belt_force(&self, s: &PlantState) -> Result<f64> {
        let p = &self.params;
        let k = self.stiffness_at(s.y)?;
        let r = p.pulley_radius;
        Ok(k * (r * s.phi - s.y) + p.damping * (r * s.phi_dot - s.y_dot))
    }

    /// Time derivative of the state under motor torque `u`.
    pub fn dynamics_rhs(&self, s: &PlantState, u: f64) -> Result<PlantState> {
        if !s.is_finite() {
            return Err(Error::InvalidArgument("non-finite plant state".into()));
        }
        let p = &self.params;
        let f = self.belt_force(s)?;
        Ok(PlantState {
            y: s.y_dot,
            y_dot: f / p.mass,
            phi: s.phi_dot,
            phi_dot: (u - p.pulley_radius * f) / p.inertia,
        })
    }

    /// One classical RK4 step with `u` held constant over the step.
    pub fn rk4_step(&self, s: &PlantState, u: f64, dt: f64) -> Result<PlantState> {
        let x = s.to_array();
        let f = |x: [f64; 4]| -> Result<[f64; 4]> {
            Ok(self.dynamics_rhs(&PlantState::from_array(x), u)?.to_array())
        };
        let axpy = |a: [f64; 4], h: f64, b: [f64; 4]| -> [f64; 4] {
            [
                a[0] + h * b[0],
                a[1] + h * b[1],
                a[2] + h * b[2],
                a[3] + h * b[3],
            ]
        };
        let k1 = f(x)?;
        let k2 = f(axpy(x, 0.5 * dt, k1))?;
        let k3 = f(axpy(x, 0.5 * dt, k2))?;
        let k4 = f(axpy(x, dt, k3))?;
        let mut out = [0.0; 4];
        for i in 0..4 {
            out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        Ok(PlantState::from_array(out))
    }

    /// Integrates the plant over a zero-order-held input sequence.
    ///
    /// Element `i` of the result is the state after `u[i]` has been held for
    /// one step of length `dt`, so the output has the same length as `u`.
    pub fn simulate(
        &self,
        s0: PlantState,
        u: &[f64],
        dt: f64,
        opts: &SimOptions,
    ) -> Result<Vec<PlantState>> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
        }
        if !s0.is_finite() {
            return Err(Error::InvalidArgument("initial state is not finite".into()));
        }
        let mut out = Vec::with_capacity(u.len());
        let mut s = s0;
        for (i, &ui) in u.iter().enumerate() {
            s = self.rk4_step(&s, ui, dt).map_err(|e| e.at_step(i))?;
            if !s.is_finite() || s.max_abs() > opts.max_abs_state {
                return Err(Error::NonFiniteState {
                    step: i,
                    bound: opts.max_abs_state,
                });
            }
            out.push(s);
        }
        Ok(out)
    }

    /// Stored plus kinetic energy ½mẏ² + ½Jφ̇² + ½k(rφ − y)².
    pub fn energy(&self, s: &PlantState) -> Result<f64> {
        let p = &self.params;
        let k = self.stiffness_at(s.y)?;
        let stretch = p.pulley_radius * s.phi - s.y;
        Ok(0.5 * p.mass * s.y_dot * s.y_dot
            + 0.5 * p.inertia * s.phi_dot * s.phi_dot
            + 0.5 * k * stretch * stretch)
    }

    /// Torque-to-carriage transfer function of the frozen-stiffness plant,
    /// obtained by probing [`Plant::dynamics_rhs`] and eliminating `φ`.
    ///
    /// Requires a frozen stiffness law (the position-dependent plant is not
    /// linear time-invariant).
    pub fn frozen_transfer_function(&self) -> Result<TransferFunction> {
        if !matches!(self.law, StiffnessLaw::Frozen(_)) {
            return Err(Error::InvalidArgument(
                "transfer function requires a frozen stiffness".into(),
            ));
        }
        // State ordering (y, ẏ, φ, φ̇); positions q = (y, φ), rates v = (ẏ, φ̇).
        let mut a = [[0.0; 4]; 4];
        for j in 0..4 {
            let mut unit = [0.0; 4];
            unit[j] = 1.0;
            let col = self
                .dynamics_rhs(&PlantState::from_array(unit), 0.0)?
                .to_array();
            for i in 0..4 {
                a[i][j] = col[i];
            }
        }
        let b = self.dynamics_rhs(&PlantState::default(), 1.0)?.to_array();

        // v̇ = -Kq - Dv + b  =>  (s²I + Ds + K) q = b u
        let (qi, vi) = ([0usize, 2], [1usize, 3]);
        let entry = |row: usize, col: usize| -> Poly {
            let mut p = Poly(vec![-a[vi[row]][qi[col]], -a[vi[row]][vi[col]], 0.0]);
            if row == col {
                p.0[2] = 1.0;
            }
            p
        };
        let p00 = entry(0, 0);
        let p01 = entry(0, 1);
        let p10 = entry(1, 0);
        let p11 = entry(1, 1);
        let den = p00.mul(&p11).sub(&p01.mul(&p10));
        // y = [adj(P) b]₀ / det(P)
        let num = p11.scale(b[vi[0]]).sub(&p01.scale(b[vi[1]]));
        Ok(TransferFunction {
            num: num.0,
            den: den.0,
        })
    }
}

/// Rational transfer function, coefficients in ascending powers of `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Poly(Vec<f64>);

impl Poly {
    fn mul(&self, other: &Poly) -> Poly {
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    fn sub(&self, other: &Poly) -> Poly {
        let n = self.0.len().max(other.0.len());
        Poly(
            (0..n)
                .map(|i| self.0.get(i).unwrap_or(&0.0) - other.0.get(i).unwrap_or(&0.0))
                .collect(),
        )
    }

    fn scale(&self, c: f64) -> Poly {
        Poly(self.0.iter().map(|v| v * c).collect())
    }
}
