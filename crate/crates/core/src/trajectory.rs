//! Rest-to-rest reference with exact derivatives through snap.

use crate::error::{Error, Result};
use crate::plant::PlantParams;

/// Coefficients of the C⁴ rest-to-rest profile, ascending powers x⁵..x⁹.
const PROFILE: [f64; 5] = [126.0, -420.0, 540.0, -315.0, 70.0];

/// Profile `p(x)` and its first four derivatives on `x ∈ [0, 1]`.
///
/// `p(0) = 0`, `p(1) = 1`, and derivatives 1..=4 vanish at both ends.
///
/// Derivatives use the factored form `p'(x) = 630·u⁴` with `u = x(1 − x)`,
/// so they are exactly zero at the endpoints.
pub fn profile(x: f64) -> [f64; 5] {
    let position = PROFILE
        .iter()
        .enumerate()
        .rev()
        .fold(0.0, |acc, (_, c)| acc * x + c)
        * x.powi(5);
    let u = x * (1.0 - x);
    let du = 1.0 - 2.0 * x;
    [
        position,
        630.0 * u.powi(4),
        2520.0 * u.powi(3) * du,
        2520.0 * (3.0 * u * u * du * du - 2.0 * u.powi(3)),
        15120.0 * u * du * (du * du - 3.0 * u),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub acceleration: Vec<f64>,
    pub jerk: Vec<f64>,
    pub snap: Vec<f64>,
}

impl Trajectory {
    /// Point-to-point move from `y_start` to `y_end` in `duration` seconds,
    /// held at `y_end` until `t_total`.
    pub fn point_to_point(
        y_start: f64,
        y_end: f64,
        duration: f64,
        dt: f64,
        t_total: f64,
    ) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "move duration must be > 0, got {duration}"
            )));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
        }
        if !(t_total.is_finite() && t_total >= duration) {
            return Err(Error::InvalidArgument(format!(
                "horizon {t_total} shorter than move duration {duration}"
            )));
        }
        if !(y_start.is_finite() && y_end.is_finite()) {
            return Err(Error::InvalidArgument("non-finite endpoints".into()));
        }
        let n = (t_total / dt).round() as usize + 1;
        if n < 2 {
            return Err(Error::InvalidArgument(
                "trajectory needs at least 2 samples".into(),
            ));
        }
        let stroke = y_end - y_start;
        let mut traj = Self::with_capacity(dt, n);
        for i in 0..n {
            let t = i as f64 * dt;
            let x = (t / duration).min(1.0);
            let p = profile(x);
            let mut scale = 1.0;
            traj.position.push(y_start + stroke * p[0]);
            let mut derivs = [0.0; 4];
            for (k, d) in derivs.iter_mut().enumerate() {
                scale /= duration;
                *d = stroke * p[k + 1] * scale;
            }
            traj.velocity.push(derivs[0]);
            traj.acceleration.push(derivs[1]);
            traj.jerk.push(derivs[2]);
            traj.snap.push(derivs[3]);
        }
        Ok(traj)
    }

    /// Reference held at `y` for `n` samples.
    pub fn constant(y: f64, n: usize, dt: f64) -> Self {
        Self {
            dt,
            position: vec![y; n],
            velocity: vec![0.0; n],
            acceleration: vec![0.0; n],
            jerk: vec![0.0; n],
            snap: vec![0.0; n],
        }
    }

    fn with_capacity(dt: f64, n: usize) -> Self {
        Self {
            dt,
            position: Vec::with_capacity(n),
            velocity: Vec::with_capacity(n),
            acceleration: Vec::with_capacity(n),
            jerk: Vec::with_capacity(n),
            snap: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.position.len()
    }

    pub fn is_empty(&self) -> bool {
        self.position.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    /// Largest absolute position change along the reference.
    pub fn stroke(&self) -> f64 {
        let (lo, hi) = self
            .position
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| {
                (lo.min(y), hi.max(y))
            });
        if self.position.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.position.len();
        if n < 2 {
            return Err(Error::InvalidArgument(
                "trajectory needs at least 2 samples".into(),
            ));
        }
        let cols = [&self.velocity, &self.acceleration, &self.jerk, &self.snap];
        if cols.iter().any(|c| c.len() != n) {
            return Err(Error::DimensionMismatch(
                "trajectory columns differ in length".into(),
            ));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "dt must be > 0, got {}",
                self.dt
            )));
        }
        let all = std::iter::once(&self.position).chain(cols);
        if all.flat_map(|c| c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "trajectory contains non-finite samples".into(),
            ));
        }
        Ok(())
    }

    /// Ensures every reference position maps into the plant's ρ domain.
    pub fn check_domain(&self, params: &PlantParams) -> Result<()> {
        for &y in &self.position {
            params.check_rho(y / params.ell)?;
        }
        Ok(())
    }

    /// CSV with columns `t,r0,r1,r2,r3,r4`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,r0,r1,r2,r3,r4\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{:e},{:e},{:e},{:e},{:e},{:e}\n",
                self.time(i),
                self.position[i],
                self.velocity[i],
                self.acceleration[i],
                self.jerk[i],
                self.snap[i]
            ));
        }
        out
    }
}
