use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{Point, Scenario, Scene};

use super::derive_seed;

/// Uniform target prior: position rectangle, speed and velocity-angle ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenePrior {
    pub tx: Point,
    pub rx: Point,
    pub x: [f64; 2],
    pub y: [f64; 2],
    /// m/s
    pub speed: [f64; 2],
    pub velocity_angle_deg: [f64; 2],
    pub rcs: f64,
    pub scenario: Scenario,
}

impl Default for ScenePrior {
    fn default() -> Self {
        Self::scenario_one()
    }
}

impl ScenePrior {
    /// Baseline 2000 m, targets in `[-1000, 1000] x [-1000, -500]`.
    pub fn scenario_one() -> Self {
        Self {
            tx: [-1000.0, 0.0],
            rx: [1000.0, 0.0],
            x: [-1000.0, 1000.0],
            y: [-1000.0, -500.0],
            speed: [0.0, 30.0],
            velocity_angle_deg: [-5.0, 5.0],
            rcs: 1.0,
            scenario: Scenario::LosBlocked,
        }
    }

    /// Baseline 400 m with a direct path, targets in `[-200, 200] x [-200, -100]`.
    pub fn scenario_two() -> Self {
        Self {
            tx: [-200.0, 0.0],
            rx: [200.0, 0.0],
            x: [-200.0, 200.0],
            y: [-200.0, -100.0],
            scenario: Scenario::LosPresent,
            ..Self::scenario_one()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("x", self.x),
            ("y", self.y),
            ("speed", self.speed),
            ("velocity_angle_deg", self.velocity_angle_deg),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidConfig(format!("{name} range [{lo}, {hi}] is not ordered")));
            }
        }
        if self.speed[0] < 0.0 {
            return Err(Error::InvalidConfig("speed range must be nonnegative".into()));
        }
        if !(self.rcs > 0.0) {
            return Err(Error::InvalidConfig(format!("rcs must be positive, got {}", self.rcs)));
        }
        if self.tx == self.rx {
            return Err(Error::InvalidConfig("transmitter and receiver coincide".into()));
        }
        Ok(())
    }

    /// Largest `R_bis` over the position rectangle (attained at a corner).
    pub fn max_bistatic_range(&self) -> f64 {
        let d = |a: Point, b: Point| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        [self.x[0], self.x[1]]
            .iter()
            .flat_map(|&x| [self.y[0], self.y[1]].map(|y| [x, y]))
            .map(|p| d(self.tx, p) + d(p, self.rx))
            .fold(0.0, f64::max)
    }

    /// Largest Doppler magnitude the prior can produce.
    pub fn max_doppler(&self, wavelength: f64) -> f64 {
        2.0 * self.speed[1] / wavelength
    }
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Draws a target; a draw landing on a terminal is repeated with the next
/// sub-seed.
pub fn draw_scene(prior: &ScenePrior, seed: u64) -> Result<Scene> {
    prior.validate()?;
    for attempt in 0..64u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(if attempt == 0 { seed } else { derive_seed(seed, &[attempt]) });
        let target = [uniform(&mut rng, prior.x), uniform(&mut rng, prior.y)];
        let speed = uniform(&mut rng, prior.speed);
        let phi = uniform(&mut rng, prior.velocity_angle_deg).to_radians();
        let mut scene = Scene::new(prior.tx, prior.rx, target)
            .with_motion(speed, phi)
            .with_scenario(prior.scenario);
        scene.rcs = prior.rcs;
        if scene.validate().is_ok() {
            return Ok(scene);
        }
    }
    Err(Error::InvalidConfig("scene prior keeps producing targets on a terminal".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::derive_propagation;
    use crate::waveform::FrameConfig;

    #[test]
    fn scenario_one_draws_exceed_baseline() {
        let prior = ScenePrior::scenario_one();
        let cfg = FrameConfig::reference();
        for seed in 0..10_000 {
            let s = draw_scene(&prior, seed).unwrap();
            let p = derive_propagation(&s, &cfg).unwrap();
            assert!(p.bistatic_range > 2000.0);
            assert!(p.nlos_block(&cfg) >= 7);
            assert!(p.bistatic_range <= prior.max_bistatic_range() + 1e-9);
        }
    }

    #[test]
    fn velocity_angle_bound() {
        let prior = ScenePrior::scenario_one();
        for seed in 0..2000 {
            let s = draw_scene(&prior, seed).unwrap();
            let bound = s.speed * (1.0 - 5f64.to_radians().cos()) + 1e-12;
            assert!((s.bistatic_velocity() - s.speed).abs() <= bound);
            assert!((0.0..=30.0).contains(&s.speed));
        }
    }

    #[test]
    fn point_prior_and_determinism() {
        let prior = ScenePrior {
            x: [10.0, 10.0],
            y: [-700.0, -700.0],
            ..ScenePrior::scenario_one()
        };
        let a = draw_scene(&prior, 1).unwrap();
        let b = draw_scene(&prior, 2).unwrap();
        assert_eq!(a.target, [10.0, -700.0]);
        assert_eq!(a.target, b.target);
        assert_eq!(draw_scene(&ScenePrior::scenario_one(), 9).unwrap(), draw_scene(&ScenePrior::scenario_one(), 9).unwrap());
    }

    #[test]
    fn terminal_hits_are_redrawn_or_rejected() {
        let on_rx = ScenePrior {
            x: [1000.0, 1000.0],
            y: [0.0, 0.0],
            ..ScenePrior::scenario_one()
        };
        assert!(draw_scene(&on_rx, 0).is_err());
        let bad = ScenePrior {
            x: [1.0, 0.0],
            ..ScenePrior::scenario_one()
        };
        assert!(draw_scene(&bad, 0).is_err());
    }

    #[test]
    fn scenario_two_corner_range() {
        let p = ScenePrior::scenario_two();
        let want = 200.0 + (400.0f64.powi(2) + 200.0f64.powi(2)).sqrt();
        assert!((p.max_bistatic_range() - want).abs() < 1e-9);
    }
}
