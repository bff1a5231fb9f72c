//! Geometry of the two-node bistatic network and the map from target state to
//! the signal parameters: Doppler scale η, bistatic delay τ₀ and the
//! inter-sensor delays τ_m of each uniform linear array.
//!
//! Positions are in meters, velocities in m/s, delays in seconds. The
//! parameter vector is θ = [x, y, η]. Derivatives with respect to η treat the
//! Doppler scale as an additive deviation `δ` on top of the kinematic value
//! `η(p)`, so `∂k/∂p` carries the `∇η` term and `∂k/∂η = t − τ₀ − τ_m`.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// 1 knot in m/s.
pub const KNOT_MPS: f64 = 0.514444;
pub const DEFAULT_SOUND_SPEED: f64 = 1500.0;
/// Targets closer than this to a node origin are rejected.
pub const MIN_NODE_DISTANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2<T> {
    pub x: T,
    pub y: T,
}

pub type Position2D<T> = Vec2<T>;

impl<T: Real> Vec2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Counter-clockwise rotation by `angle` radians.
    pub fn rotated(self, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// `(I − u uᵀ) w` for a unit vector `u`.
    pub fn reject_from(self, u: Self) -> Self {
        self - u * u.dot(self)
    }
}

impl<T: Real> Add for Vec2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Real> Sub for Vec2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl<T: Real> Mul<T> for Vec2<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s)
    }
}

impl<T: Real> Neg for Vec2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Which of the two sensor nodes. Node 1 transmits, node 2 receives the
/// target echo; both listen passively.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeId {
    One,
    Two,
}

impl NodeId {
    pub const BOTH: [NodeId; 2] = [NodeId::One, NodeId::Two];

    pub fn number(self) -> usize {
        match self {
            NodeId::One => 1,
            NodeId::Two => 2,
        }
    }
}

/// A uniform linear array: `num_sensors` elements spaced `element_spacing`
/// along `steering_axis`, first element at `origin`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorNode<T> {
    pub origin: Position2D<T>,
    pub num_sensors: usize,
    pub element_spacing: T,
    pub steering_axis: Vec2<T>,
}

impl<T: Real> SensorNode<T> {
    /// Array along the y axis, e = [0, 1]ᵀ.
    pub fn new(origin: Position2D<T>, num_sensors: usize, element_spacing: T) -> Self {
        Self {
            origin,
            num_sensors,
            element_spacing,
            steering_axis: Vec2::new(T::zero(), T::one()),
        }
    }

    pub fn validate(&self, label: &str) -> Result<()> {
        if self.num_sensors == 0 {
            return Err(Error::Config(format!("{label}: num_sensors must be >= 1")));
        }
        if !(self.element_spacing > T::zero()) || !self.element_spacing.is_finite() {
            return Err(Error::Config(format!("{label}: element_spacing must be > 0")));
        }
        if !self.origin.is_finite() {
            return Err(Error::Config(format!("{label}: origin must be finite")));
        }
        let n = self.steering_axis.norm();
        if (n - T::one()).abs() > T::lit(1e-6) {
            return Err(Error::Config(format!("{label}: steering_axis must be a unit vector")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetState<T> {
    pub position: Position2D<T>,
    /// m/s.
    pub velocity: Vec2<T>,
    pub weight_tonnes: T,
    /// Passive source variance σ_s² (linear).
    pub emitted_power: T,
}

impl<T: Real> TargetState<T> {
    /// Builds a target from a speed in knots and a heading measured
    /// counter-clockwise from the +x axis, in degrees.
    pub fn from_knots(position: Position2D<T>, speed_knots: T, heading_deg: T, weight_tonnes: T) -> Self {
        let speed = speed_knots * T::lit(KNOT_MPS);
        let h = heading_deg.to_radians();
        Self {
            position,
            velocity: Vec2::new(speed * h.cos(), speed * h.sin()),
            weight_tonnes,
            emitted_power: T::zero(),
        }
    }

    pub fn speed_knots(&self) -> T {
        self.velocity.norm() / T::lit(KNOT_MPS)
    }
}

/// Everything a Fisher information evaluation needs to know about the world.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario<T> {
    pub node1: SensorNode<T>,
    pub node2: SensorNode<T>,
    pub target: TargetState<T>,
    /// c, m/s.
    pub sound_speed: T,
    /// Bistatic (communication waveform) sample rate, Hz.
    pub sample_rate: T,
    /// Passive observation window N samples at `passive_sample_rate`.
    pub num_samples: usize,
    pub passive_sample_rate: T,
}

/// Range and unit direction from one node to the target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeGeometry<T> {
    pub range: T,
    pub unit: Vec2<T>,
}

/// Gradients with respect to the target position p = [x, y].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignalGradients<T> {
    pub eta: Vec2<T>,
    pub tau0: Vec2<T>,
    pub tau_m: Vec2<T>,
}

/// ∂k/∂η and ∂k/∂p for k(t_n; θ) = η (t_n − τ₀ − τ_m).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KDerivatives<T> {
    pub d_eta: T,
    pub d_p: Vec2<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector<T> {
    pub x: T,
    pub y: T,
    pub eta: T,
}

impl<T: Real> ParamVector<T> {
    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.eta]
    }
}

impl<T: Real> Scenario<T> {
    pub fn node(&self, id: NodeId) -> &SensorNode<T> {
        match id {
            NodeId::One => &self.node1,
            NodeId::Two => &self.node2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.node1.validate("node1")?;
        self.node2.validate("node2")?;
        if (self.node1.origin - self.node2.origin).norm() < T::lit(MIN_NODE_DISTANCE) {
            return Err(Error::Config("node origins must differ".into()));
        }
        if !(self.sound_speed > T::zero()) {
            return Err(Error::Config("sound_speed must be > 0".into()));
        }
        if !(self.sample_rate > T::zero()) || !(self.passive_sample_rate > T::zero()) {
            return Err(Error::Config("sample rates must be > 0".into()));
        }
        if self.num_samples < 2 {
            return Err(Error::Config("num_samples must be >= 2".into()));
        }
        if !self.target.position.is_finite() || !self.target.velocity.is_finite() {
            return Err(Error::Config("target state must be finite".into()));
        }
        if !(self.target.weight_tonnes > T::zero()) {
            return Err(Error::Config("target weight_tonnes must be > 0".into()));
        }
        if self.target.emitted_power < T::zero() {
            return Err(Error::Config("target emitted_power must be >= 0".into()));
        }
        Ok(())
    }

    pub fn with_target_position(&self, position: Position2D<T>) -> Self {
        let mut s = *self;
        s.target.position = position;
        s
    }

    /// Shifts nodes and target by `offset`.
    pub fn translated(&self, offset: Vec2<T>) -> Self {
        let mut s = *self;
        s.node1.origin = s.node1.origin + offset;
        s.node2.origin = s.node2.origin + offset;
        s.target.position = s.target.position + offset;
        s
    }

    /// Rotates the whole scene about the coordinate origin, array axes and
    /// velocity included.
    pub fn rotated(&self, angle: T) -> Self {
        let mut s = *self;
        for node in [&mut s.node1, &mut s.node2] {
            node.origin = node.origin.rotated(angle);
            node.steering_axis = node.steering_axis.rotated(angle);
        }
        s.target.position = s.target.position.rotated(angle);
        s.target.velocity = s.target.velocity.rotated(angle);
        s
    }

    pub fn passive_sample_period(&self) -> T {
        T::one() / self.passive_sample_rate
    }

    pub fn sample_period(&self) -> T {
        T::one() / self.sample_rate
    }

    pub fn geometry(&self, id: NodeId) -> Result<NodeGeometry<T>> {
        let diff = self.target.position - self.node(id).origin;
        let range = diff.norm();
        if !(range >= T::lit(MIN_NODE_DISTANCE)) {
            return Err(Error::DegenerateGeometry {
                node: id.number(),
                distance: range.to_f64_lossy(),
            });
        }
        Ok(NodeGeometry {
            range,
            unit: diff * (T::one() / range),
        })
    }

    fn both_geometries(&self) -> Result<[NodeGeometry<T>; 2]> {
        Ok([self.geometry(NodeId::One)?, self.geometry(NodeId::Two)?])
    }

    /// η = 1 + (v·u₁ + v·u₂)/c.
    pub fn doppler_scale(&self) -> Result<T> {
        let v = self.target.velocity;
        let [g1, g2] = self.both_geometries()?;
        Ok(T::one() + (v.dot(g1.unit) + v.dot(g2.unit)) / self.sound_speed)
    }

    /// τ₀ = (r₁ + r₂)/c.
    pub fn bistatic_delay(&self) -> Result<T> {
        let [g1, g2] = self.both_geometries()?;
        Ok((g1.range + g2.range) / self.sound_speed)
    }

    /// eᵀu_γ: direction cosine of the target relative to the array axis.
    pub fn axis_cosine(&self, id: NodeId) -> Result<T> {
        let g = self.geometry(id)?;
        Ok(self.node(id).steering_axis.dot(g.unit))
    }

    /// Gradient of eᵀu_γ with respect to p: (I − u uᵀ) e / r.
    pub fn axis_cosine_gradient(&self, id: NodeId) -> Result<Vec2<T>> {
        let g = self.geometry(id)?;
        Ok(self.node(id).steering_axis.reject_from(g.unit) * (T::one() / g.range))
    }

    fn check_sensor(&self, id: NodeId, m: usize) -> Result<()> {
        let count = self.node(id).num_sensors;
        if m == 0 || m > count {
            return Err(Error::Config(format!(
                "sensor index {m} outside 1..={count} for node {}",
                id.number()
            )));
        }
        Ok(())
    }

    /// d(m − 1)/c, the delay per unit axis cosine at sensor m (1-based).
    pub fn sensor_lever(&self, id: NodeId, m: usize) -> T {
        self.node(id).element_spacing * T::from_usize_lossy(m - 1) / self.sound_speed
    }

    /// τ_m^γ = (d/c)(m − 1) eᵀu_γ, m 1-based.
    pub fn intersensor_delay(&self, id: NodeId, m: usize) -> Result<T> {
        self.check_sensor(id, m)?;
        Ok(self.sensor_lever(id, m) * self.axis_cosine(id)?)
    }

    pub fn signal_param_gradients(&self, id: NodeId, m: usize) -> Result<SignalGradients<T>> {
        self.check_sensor(id, m)?;
        let v = self.target.velocity;
        let inv_c = T::one() / self.sound_speed;
        let geoms = self.both_geometries()?;
        let mut eta = Vec2::zero();
        let mut tau0 = Vec2::zero();
        for g in geoms {
            eta = eta + v.reject_from(g.unit) * (inv_c / g.range);
            tau0 = tau0 + g.unit * inv_c;
        }
        let tau_m = self.axis_cosine_gradient(id)? * self.sensor_lever(id, m);
        Ok(SignalGradients { eta, tau0, tau_m })
    }

    /// Derivatives of k(t_n; θ) at sample time `t_n`.
    pub fn k_derivatives(&self, id: NodeId, m: usize, t_n: T) -> Result<KDerivatives<T>> {
        let grads = self.signal_param_gradients(id, m)?;
        let eta = self.doppler_scale()?;
        let lag = t_n - self.bistatic_delay()? - self.intersensor_delay(id, m)?;
        Ok(KDerivatives {
            d_eta: lag,
            d_p: grads.eta * lag - (grads.tau0 + grads.tau_m) * eta,
        })
    }

    /// k(t_n; θ) = (η + δ)(t_n − τ₀ − τ_m), with Doppler deviation `delta`.
    pub fn k_value(&self, id: NodeId, m: usize, t_n: T, delta: T) -> Result<T> {
        let eta = self.doppler_scale()? + delta;
        Ok(eta * (t_n - self.bistatic_delay()? - self.intersensor_delay(id, m)?))
    }

    pub fn param_vector(&self) -> Result<ParamVector<T>> {
        Ok(ParamVector {
            x: self.target.position.x,
            y: self.target.position.y,
            eta: self.doppler_scale()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symmetric(p: Vec2<f64>, v: Vec2<f64>) -> Scenario<f64> {
        Scenario {
            node1: SensorNode::new(Vec2::new(-1000.0, 0.0), 4, 0.125),
            node2: SensorNode::new(Vec2::new(1000.0, 0.0), 4, 0.125),
            target: TargetState {
                position: p,
                velocity: v,
                weight_tonnes: 1.0,
                emitted_power: 1.0,
            },
            sound_speed: 1500.0,
            sample_rate: 24_000.0,
            num_samples: 128,
            passive_sample_rate: 2560.0,
        }
    }

    #[test]
    fn doppler_scale_examples() {
        let s = symmetric(Vec2::new(0.0, 1000.0), Vec2::zero());
        assert_eq!(s.doppler_scale().unwrap(), 1.0);
        let s = symmetric(Vec2::new(0.0, 1000.0), Vec2::new(0.0, 5.0));
        let expected = 1.0 + (2.0 * 5.0 / 2f64.sqrt()) / 1500.0;
        assert!((s.doppler_scale().unwrap() - expected).abs() < 1e-15);
        assert!((s.doppler_scale().unwrap() - 1.0047140).abs() < 1e-7);
        let s = symmetric(Vec2::new(0.0, 1000.0), Vec2::new(5.0, 0.0));
        assert!((s.doppler_scale().unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bistatic_delay_examples() {
        let s = symmetric(Vec2::new(0.0, 0.0), Vec2::zero());
        assert!((s.bistatic_delay().unwrap() - 2000.0 / 1500.0).abs() < 1e-15);
        let s = symmetric(Vec2::new(0.0, 1000.0), Vec2::zero());
        assert!((s.bistatic_delay().unwrap() - 1.885_618_083).abs() < 1e-8);
        let s = symmetric(Vec2::new(-1000.0 + 1e-3, 0.0), Vec2::zero());
        assert!((s.bistatic_delay().unwrap() - 2000.0 / 1500.0).abs() < 1e-9);
    }

    #[test]
    fn intersensor_delay_examples() {
        let s = symmetric(Vec2::new(300.0, 800.0), Vec2::new(1.0, 2.0));
        assert_eq!(s.intersensor_delay(NodeId::One, 1).unwrap(), 0.0);
        // same y as the nodes: broadside
        let s = symmetric(Vec2::new(0.0, 0.0), Vec2::zero());
        assert_eq!(s.intersensor_delay(NodeId::Two, 4).unwrap(), 0.0);
        // endfire: target straight up from node 1
        let s = symmetric(Vec2::new(-1000.0, 500.0), Vec2::zero());
        let tau = s.intersensor_delay(NodeId::One, 3).unwrap();
        assert!((tau - 2.0 * 0.125 / 1500.0).abs() < 1e-18);
        assert!((tau - 1.6667e-4).abs() < 1e-8);
        assert!(matches!(s.intersensor_delay(NodeId::One, 0), Err(Error::Config(_))));
        assert!(matches!(s.intersensor_delay(NodeId::One, 5), Err(Error::Config(_))));
    }

    #[test]
    fn degenerate_geometry_is_an_error() {
        let s = symmetric(Vec2::new(-1000.0, 0.0), Vec2::zero());
        assert!(matches!(
            s.doppler_scale(),
            Err(Error::DegenerateGeometry { node: 1, .. })
        ));
        assert!(s.bistatic_delay().is_err());
        assert!(s.signal_param_gradients(NodeId::Two, 2).is_err());
    }

    #[test]
    fn gradient_special_cases() {
        let s = symmetric(Vec2::new(0.0, 1000.0), Vec2::zero());
        let g = s.signal_param_gradients(NodeId::One, 3).unwrap();
        assert_eq!(g.eta, Vec2::zero());
        assert!(g.tau0.x.abs() < 1e-18);
        let k = s.k_derivatives(NodeId::One, 3, 2.0).unwrap();
        let eta = s.doppler_scale().unwrap();
        assert!((k.d_p.x + eta * (g.tau0.x + g.tau_m.x)).abs() < 1e-18);
        let t = s.bistatic_delay().unwrap() + s.intersensor_delay(NodeId::One, 3).unwrap();
        assert!(s.k_derivatives(NodeId::One, 3, t).unwrap().d_eta.abs() < 1e-15);
    }

    #[test]
    fn tau_m_gradient_is_orthogonal_to_look_direction() {
        let s = symmetric(Vec2::new(420.0, -730.0), Vec2::new(2.0, -1.0));
        for id in NodeId::BOTH {
            let u = s.geometry(id).unwrap().unit;
            let g = s.signal_param_gradients(id, 4).unwrap();
            assert!(u.dot(g.tau_m).abs() < 1e-12 * g.tau_m.norm().max(1e-30));
        }
    }

    #[test]
    fn knots_conversion() {
        let t = TargetState::from_knots(Vec2::new(0.0f64, 0.0), 9.72, 90.0, 1.0);
        assert!((t.velocity.y - 9.72 * 0.514444).abs() < 1e-12);
        assert!(t.velocity.x.abs() < 1e-12);
        assert!((t.speed_knots() - 9.72).abs() < 1e-12);
    }

    #[test]
    fn f32_scenario_evaluates() {
        let s: Scenario<f32> = Scenario {
            node1: SensorNode::new(Vec2::new(-1000.0, 0.0), 2, 0.125),
            node2: SensorNode::new(Vec2::new(1000.0, 0.0), 2, 0.125),
            target: TargetState {
                position: Vec2::new(0.0, 1000.0),
                velocity: Vec2::new(0.0, 5.0),
                weight_tonnes: 1.0,
                emitted_power: 0.0,
            },
            sound_speed: 1500.0,
            sample_rate: 24_000.0,
            num_samples: 16,
            passive_sample_rate: 2560.0,
        };
        assert!((s.doppler_scale().unwrap() - 1.004_714).abs() < 1e-5);
    }
}
