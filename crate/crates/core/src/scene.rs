//! Planar bistatic geometry and the propagation quantities derived from it.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waveform::FrameConfig;
use crate::SPEED_OF_LIGHT;

pub type Point = [f64; 2];

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Angle at `vertex` between the rays towards `a` and `b`, in `[0, pi]`.
fn angle_at(vertex: Point, a: Point, b: Point) -> f64 {
    let u = [a[0] - vertex[0], a[1] - vertex[1]];
    let v = [b[0] - vertex[0], b[1] - vertex[1]];
    let cross = u[0] * v[1] - u[1] * v[0];
    let dot = u[0] * v[0] + u[1] * v[1];
    cross.abs().atan2(dot)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Only the target echo reaches the receiver.
    LosBlocked,
    /// Direct transmitter-receiver path plus the target echo.
    LosPresent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scene {
    pub tx: Point,
    pub rx: Point,
    pub target: Point,
    /// Speed in m/s.
    pub speed: f64,
    /// Angle between the velocity and the bistatic bisector, rad.
    pub velocity_angle: f64,
    /// Radar cross-section in m^2.
    pub rcs: f64,
    pub scenario: Scenario,
    /// Pointing error of the receive beam, `theta_R_hat - theta_R`, rad.
    pub aoa_error: f64,
    /// Pointing error of the transmit beam, `theta_T_hat - theta_T`, rad.
    pub aod_error: f64,
    pub tx_elements: usize,
    pub rx_elements: usize,
}

impl Scene {
    pub fn new(tx: Point, rx: Point, target: Point) -> Self {
        Self {
            tx,
            rx,
            target,
            speed: 0.0,
            velocity_angle: 0.0,
            rcs: 1.0,
            scenario: Scenario::LosBlocked,
            aoa_error: 0.0,
            aod_error: 0.0,
            tx_elements: 1,
            rx_elements: 1,
        }
    }

    pub fn with_motion(mut self, speed: f64, velocity_angle: f64) -> Self {
        self.speed = speed;
        self.velocity_angle = velocity_angle;
        self
    }

    pub fn with_scenario(mut self, scenario: Scenario) -> Self {
        self.scenario = scenario;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.tx, self.rx, self.target]
            .iter()
            .flatten()
            .chain([self.speed, self.velocity_angle, self.rcs].iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidScene("non-finite scene value".into()));
        }
        if dist(self.tx, self.target) <= 0.0 || dist(self.rx, self.target) <= 0.0 {
            return Err(Error::InvalidScene("target coincides with a radio site".into()));
        }
        if dist(self.tx, self.rx) <= 0.0 {
            return Err(Error::InvalidScene("transmitter and receiver coincide".into()));
        }
        if self.rcs <= 0.0 {
            return Err(Error::InvalidScene(format!("rcs must be positive, got {}", self.rcs)));
        }
        if self.tx_elements == 0 || self.rx_elements == 0 {
            return Err(Error::InvalidScene("arrays need at least one element".into()));
        }
        Ok(())
    }

    pub fn baseline(&self) -> f64 {
        dist(self.tx, self.rx)
    }

    /// True angle of arrival: at the receiver, between the baseline towards
    /// the transmitter and the direction of the target.
    pub fn aoa(&self) -> f64 {
        angle_at(self.rx, self.tx, self.target)
    }

    /// True angle of departure, measured at the transmitter against the
    /// baseline towards the receiver.
    pub fn aod(&self) -> f64 {
        angle_at(self.tx, self.rx, self.target)
    }

    /// Receive beam pointing `theta_R_hat`.
    pub fn aoa_pointing(&self) -> f64 {
        self.aoa() + self.aoa_error
    }

    pub fn aod_pointing(&self) -> f64 {
        self.aod() + self.aod_error
    }

    pub fn bistatic_velocity(&self) -> f64 {
        self.speed * self.velocity_angle.cos()
    }
}

/// Delays, Doppler and complex gains implied by a scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagation {
    pub d_tx: f64,
    pub d_rx: f64,
    pub baseline: f64,
    pub bistatic_range: f64,
    pub delay_nlos: f64,
    pub delay_los: f64,
    /// Bistatic angle at the target, rad.
    pub bistatic_angle: f64,
    pub doppler: f64,
    pub bistatic_velocity: f64,
    pub gain_nlos: Complex64,
    pub gain_los: Complex64,
    pub wavelength: f64,
    /// `LosBlocked` zeroes the direct path at synthesis time.
    pub scenario: Scenario,
}

impl Propagation {
    /// Rescales `gain_nlos` to magnitude `mag`, keeping its carrier phase.
    pub fn with_nlos_magnitude(mut self, mag: f64) -> Self {
        self.gain_nlos = Complex64::from_polar(mag, self.gain_nlos.arg());
        self
    }

    pub fn with_los_magnitude(mut self, mag: f64) -> Self {
        self.gain_los = Complex64::from_polar(mag, self.gain_los.arg());
        self
    }

    /// Hypothesis block holding the echo: `l` with
    /// `(l - 1) T_cp <= tau_nlos < l T_cp`.
    pub fn nlos_block(&self, cfg: &FrameConfig) -> usize {
        (self.delay_nlos / cfg.cp_duration()).floor() as usize + 1
    }

    pub fn los_block(&self, cfg: &FrameConfig) -> usize {
        (self.delay_los / cfg.cp_duration()).floor() as usize + 1
    }
}

/// Law of cosines for the angle opposite `opposite`, clamped into `[0, pi]`.
pub fn angle_from_sides(a: f64, b: f64, opposite: f64) -> f64 {
    let c = (a * a + b * b - opposite * opposite) / (2.0 * a * b);
    c.clamp(-1.0, 1.0).acos()
}

pub fn derive_propagation(scene: &Scene, cfg: &FrameConfig) -> Result<Propagation> {
    scene.validate()?;
    let d_tx = dist(scene.tx, scene.target);
    let d_rx = dist(scene.target, scene.rx);
    let baseline = dist(scene.tx, scene.rx);
    let bistatic_range = d_tx + d_rx;
    let delay_nlos = bistatic_range / SPEED_OF_LIGHT;
    let delay_los = baseline / SPEED_OF_LIGHT;
    let bistatic_angle = angle_from_sides(d_tx, d_rx, baseline);
    let wavelength = cfg.wavelength();
    let fc = cfg.carrier_frequency();
    let doppler = 2.0 * scene.speed / wavelength
        * scene.velocity_angle.cos()
        * (bistatic_angle / 2.0).cos();
    let gain_nlos = Complex64::from_polar(
        wavelength * scene.rcs.sqrt() / ((4.0 * PI).powf(1.5) * d_tx * d_rx),
        -2.0 * PI * (fc * delay_nlos).fract(),
    );
    let gain_los = Complex64::from_polar(
        wavelength / (4.0 * PI * baseline),
        -2.0 * PI * (fc * delay_los).fract(),
    );
    Ok(Propagation {
        d_tx,
        d_rx,
        baseline,
        bistatic_range,
        delay_nlos,
        delay_los,
        bistatic_angle,
        doppler,
        bistatic_velocity: scene.bistatic_velocity(),
        gain_nlos,
        gain_los,
        wavelength,
        scenario: scene.scenario,
    })
}

/// Unit-norm half-wavelength ULA steering vector.
fn steering(theta: f64, elements: usize) -> Vec<Complex64> {
    let scale = 1.0 / (elements as f64).sqrt();
    (0..elements)
        .map(|l| Complex64::from_polar(scale, PI * l as f64 * theta.sin()))
        .collect()
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Combined array gain `f_R^H W f_T` with beams steered to the pointing
/// angles; unit magnitude when the beams are matched.
pub fn beamforming_gain(scene: &Scene) -> Complex64 {
    let (nt, nr) = (scene.tx_elements.max(1), scene.rx_elements.max(1));
    let rx = inner(
        &steering(scene.aoa_pointing(), nr),
        &steering(scene.aoa(), nr),
    );
    let tx = inner(
        &steering(scene.aod(), nt),
        &steering(scene.aod_pointing(), nt),
    );
    rx * tx
}
