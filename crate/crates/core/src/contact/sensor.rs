use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{WrenchFrame, WrenchSample};
use super::ContactError;
use crate::math::{Pose, PoseSpec, Vec3};

/// Per-axis uniform noise bounds and mounting of a wrist force/torque sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorModel {
    /// Half-widths of the uniform force noise (N), sensor axes.
    pub force_noise: [f64; 3],
    /// Half-widths of the uniform torque noise (N·m), sensor axes.
    pub torque_noise: [f64; 3],
    pub seed: u64,
    /// Sensor frame expressed in the hand frame.
    pub mounting: PoseSpec,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            force_noise: [1.2, 1.2, 0.5],
            torque_noise: [0.02, 0.02, 0.01],
            seed: 0,
            mounting: PoseSpec::default(),
        }
    }
}

impl SensorModel {
    pub fn noiseless() -> Self {
        Self { force_noise: [0.0; 3], torque_noise: [0.0; 3], ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ContactError> {
        if self.force_noise.iter().chain(&self.torque_noise).all(|b| b.is_finite() && *b >= 0.0) {
            Ok(())
        } else {
            Err(ContactError::InvalidSensor(format!(
                "noise bounds must be finite and >= 0: {:?} {:?}",
                self.force_noise, self.torque_noise
            )))
        }
    }
}

/// A seeded sensor instance; the noise stream depends only on the seed and the call count.
#[derive(Debug, Clone)]
pub struct Sensor {
    model: SensorModel,
    mounting: Pose,
    rng: ChaCha8Rng,
}

impl Sensor {
    pub fn new(model: SensorModel) -> Result<Self, ContactError> {
        model.validate()?;
        Ok(Self { model, mounting: model.mounting.to_pose(), rng: ChaCha8Rng::seed_from_u64(model.seed) })
    }

    pub fn model(&self) -> &SensorModel {
        &self.model
    }

    fn draw(&mut self, bounds: &[f64; 3]) -> Vec3 {
        Vec3::from_fn(|i, _| {
            let b = bounds[i];
            if b > 0.0 { self.rng.random_range(-b..=b) } else { 0.0 }
        })
    }

    /// Express a world-frame wrench in the hand frame (torque about the hand
    /// origin) with noise added on the sensor axes.
    pub fn sense(&mut self, wrench: &WrenchSample, hand_pose: &Pose) -> WrenchSample {
        debug_assert_eq!(wrench.frame, WrenchFrame::World);
        let origin = hand_pose.translation;
        let torque_at_hand = wrench.torque + (wrench.reference - origin).cross(&wrench.force);
        let rt = hand_pose.rotation.transpose();
        let f_hand = rt.apply(&wrench.force);
        let t_hand = rt.apply(&torque_at_hand);

        // Move into the sensor frame, perturb, and move back.
        let m = self.mounting;
        let mrt = m.rotation.transpose();
        let f_s = mrt.apply(&f_hand);
        let t_s = mrt.apply(&(t_hand - m.translation.cross(&f_hand)));
        let (fb, tb) = (self.model.force_noise, self.model.torque_noise);
        let noise_f = self.draw(&fb);
        let noise_t = self.draw(&tb);
        let f_s = f_s + noise_f;
        let t_s = t_s + noise_t;
        let f_h = m.rotation.apply(&f_s);
        let t_h = m.rotation.apply(&t_s) + m.translation.cross(&f_h);

        let noisy = noise_f.iter().chain(noise_t.iter()).any(|v| *v != 0.0);
        WrenchSample { force: f_h, torque: t_h, frame: WrenchFrame::Hand, reference: origin, noisy }
    }
}

/// One noisy reading: `sensor` advances its noise stream.
pub fn sense(wrench: &WrenchSample, hand_pose: &Pose, sensor: &mut Sensor) -> WrenchSample {
    sensor.sense(wrench, hand_pose)
}
