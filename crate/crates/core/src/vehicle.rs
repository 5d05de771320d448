//! Bicycle-model steering ground truth and trajectory reconstruction.

use crate::error::{Error, Result};

/// Below this speed the bicycle-model steering label is numerically
/// unreliable; such frames are flagged and excluded from training targets.
pub const LOW_SPEED_CUTOFF: f64 = 0.5;

/// Timestamped ego pose and speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub velocity: f64,
    pub t: f64,
}

impl EgoState {
    pub fn new(x: f64, y: f64, heading: f64, velocity: f64, t: f64) -> Self {
        Self {
            x,
            y,
            heading,
            velocity,
            t,
        }
    }

    pub fn origin() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0, 0.0)
    }
}

/// Ordered ego states with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Vec<EgoState>,
}

impl Trajectory {
    pub fn new(states: Vec<EgoState>) -> Result<Self> {
        for w in states.windows(2) {
            if w[1].t <= w[0].t {
                return Err(Error::InvalidConfig(format!(
                    "trajectory timestamps must strictly increase ({} then {})",
                    w[0].t, w[1].t
                )));
            }
        }
        Ok(Self { states })
    }

    pub fn states(&self) -> &[EgoState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// CSV rendering `t,x,y,heading,velocity`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,y,heading,velocity\n");
        for s in &self.states {
            out.push_str(&format!("{},{},{},{},{}\n", s.t, s.x, s.y, s.heading, s.velocity));
        }
        out
    }
}

/// Wheelbase of the bicycle model, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelbaseConfig {
    pub length: f64,
}

impl Default for WheelbaseConfig {
    fn default() -> Self {
        Self { length: 2.7 }
    }
}

impl WheelbaseConfig {
    pub fn new(length: f64) -> Result<Self> {
        if length > 0.0 && length.is_finite() {
            Ok(Self { length })
        } else {
            Err(Error::InvalidConfig(format!(
                "wheelbase must be positive and finite, got {length}"
            )))
        }
    }
}

/// Bicycle-model steering angle `Θ = atan(L·ψ̇ / v)`.
///
/// Fails below [`LOW_SPEED_CUTOFF`] rather than fabricating a label.
pub fn steering_from_yaw(velocity: f64, yaw_rate: f64, wheelbase: f64) -> Result<f64> {
    if velocity.abs() < LOW_SPEED_CUTOFF {
        return Err(Error::LowSpeed {
            speed: velocity,
            cutoff: LOW_SPEED_CUTOFF,
        });
    }
    Ok((wheelbase * yaw_rate / velocity).atan())
}

/// Inverse of [`steering_from_yaw`]: `ψ̇ = v·tan(Θ) / L`.
pub fn yaw_from_steering(steering: f64, velocity: f64, wheelbase: f64) -> Result<f64> {
    if steering.abs() >= std::f64::consts::FRAC_PI_2 {
        return Err(Error::SteeringOutOfRange(steering));
    }
    Ok(velocity * steering.tan() / wheelbase)
}

fn check_lengths(angles: &[f64], velocities: &[f64], dt: f64) -> Result<()> {
    if angles.len() != velocities.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} steering angles but {} velocities",
            angles.len(),
            velocities.len()
        )));
    }
    if dt <= 0.0 {
        return Err(Error::InvalidConfig("dt must be positive".into()));
    }
    Ok(())
}

/// Dead reckoning exactly as printed: each step displaces by
/// `v_t·Δt·(cos Θ_t, sin Θ_t)`, treating the steering angle itself as the
/// displacement direction. The stored heading is the angle used per step.
pub fn integrate_path_paper(
    angles: &[f64],
    velocities: &[f64],
    dt: f64,
    start: EgoState,
) -> Result<Trajectory> {
    check_lengths(angles, velocities, dt)?;
    let mut states = Vec::with_capacity(angles.len() + 1);
    states.push(start);
    let (mut x, mut y, mut t) = (start.x, start.y, start.t);
    for (&theta, &v) in angles.iter().zip(velocities) {
        x += v * dt * theta.cos();
        y += v * dt * theta.sin();
        t += dt;
        states.push(EgoState::new(x, y, theta, v, t));
    }
    Trajectory::new(states)
}

/// Kinematically consistent variant: heading integrates the bicycle-model
/// yaw rate `ψ̇ = v·tan(Θ)/L`, and position advances along the heading.
pub fn integrate_path_kinematic(
    angles: &[f64],
    velocities: &[f64],
    dt: f64,
    start: EgoState,
    wheelbase: f64,
) -> Result<Trajectory> {
    check_lengths(angles, velocities, dt)?;
    let mut states = Vec::with_capacity(angles.len() + 1);
    states.push(start);
    let (mut x, mut y, mut heading, mut t) = (start.x, start.y, start.heading, start.t);
    for (&theta, &v) in angles.iter().zip(velocities) {
        if theta.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::SteeringOutOfRange(theta));
        }
        heading += v * dt * theta.tan() / wheelbase;
        x += v * dt * heading.cos();
        y += v * dt * heading.sin();
        t += dt;
        states.push(EgoState::new(x, y, heading, v, t));
    }
    Trajectory::new(states)
}

/// Re-anchors the prediction onto ground truth at each waypoint: position
/// and heading are overwritten there, and the remainder of the predicted
/// path is carried along rigidly (rotated by the heading correction and
/// translated), which matches re-running the integration from the corrected
/// state for heading-driven integrators.
pub fn reset_at_waypoints(
    pred: &Trajectory,
    truth: &Trajectory,
    waypoints: &[usize],
) -> Result<Trajectory> {
    let mut out: Vec<EgoState> = pred.states().to_vec();
    let mut last = None;
    for &w in waypoints {
        if let Some(prev) = last {
            if w < prev {
                return Err(Error::InvalidConfig(
                    "waypoint indices must be ascending".into(),
                ));
            }
        }
        last = Some(w);
        if w >= out.len() || w >= truth.len() {
            return Err(Error::IndexOutOfRange {
                index: w,
                len: out.len().min(truth.len()),
            });
        }
        let anchor_pred = out[w];
        let anchor_truth = truth.states()[w];
        let rot = anchor_truth.heading - anchor_pred.heading;
        let (sin, cos) = rot.sin_cos();
        for state in out.iter_mut().skip(w) {
            let dx = state.x - anchor_pred.x;
            let dy = state.y - anchor_pred.y;
            state.x = anchor_truth.x + cos * dx - sin * dy;
            state.y = anchor_truth.y + sin * dx + cos * dy;
            state.heading += rot;
        }
    }
    Trajectory::new(out)
}
