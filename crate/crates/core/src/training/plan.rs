//! Training schedule: phases of setting pools, learning-rate decay and
//! optimizer constants.

use ivct_tensor::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::Setting;

/// Where a scenario draws its setting value from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettingPool {
    /// Uniform over the listed values.
    Set(Vec<f64>),
    /// Uniform over the integers in `[lo, hi]`.
    Range(u64, u64),
}

impl SettingPool {
    fn draw(&self, rng: &mut Rng) -> f64 {
        match self {
            SettingPool::Set(values) => values[rng.int_inclusive(0, values.len() as u64 - 1) as usize],
            SettingPool::Range(lo, hi) => rng.int_inclusive(*lo, *hi) as f64,
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        match self {
            SettingPool::Set(values) => values.contains(&value),
            SettingPool::Range(lo, hi) => value.fract() == 0.0 && (*lo as f64..=*hi as f64).contains(&value),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            SettingPool::Set(v) if v.is_empty() => Err(Error::Config("empty setting set".into())),
            SettingPool::Range(lo, hi) if lo > hi => Err(Error::Config(format!("setting range [{lo}, {hi}] is empty"))),
            _ => Ok(()),
        }
    }
}

/// Settings used up to (not including) `until_epoch`. A missing pool turns
/// the scenario off for the phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub until_epoch: usize,
    /// SVCT view counts.
    pub svct: Option<SettingPool>,
    /// LACT spans in degrees, starting at 0.
    pub lact: Option<SettingPool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainPlan {
    pub epochs: usize,
    /// Stops early once this many optimizer steps ran in total.
    pub max_steps: Option<usize>,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_halve_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub clip_norm: f64,
    pub seed: u64,
    pub phases: Vec<Phase>,
}

impl Default for TrainPlan {
    fn default() -> Self {
        TrainPlan::full()
    }
}

impl TrainPlan {
    /// 70 epochs: fixed test settings first, then the full ranges.
    pub fn full() -> Self {
        TrainPlan {
            epochs: 70,
            max_steps: None,
            batch_size: 2,
            lr: 1e-4,
            lr_halve_every: 20,
            beta1: 0.5,
            beta2: 0.999,
            clip_norm: 1.0,
            seed: 0,
            phases: vec![
                Phase {
                    until_epoch: 40,
                    svct: Some(SettingPool::Set(vec![18.0, 36.0, 72.0, 144.0])),
                    lact: Some(SettingPool::Set(vec![90.0, 120.0, 150.0])),
                },
                Phase {
                    until_epoch: 70,
                    svct: Some(SettingPool::Range(9, 288)),
                    lact: Some(SettingPool::Range(60, 180)),
                },
            ],
        }
    }

    /// Single-phase CPU plan on a handful of settings.
    pub fn desk() -> Self {
        TrainPlan {
            epochs: 30,
            max_steps: Some(3000),
            lr: 1e-3,
            phases: vec![Phase {
                until_epoch: 30,
                svct: Some(SettingPool::Set(vec![15.0, 30.0, 60.0])),
                lact: Some(SettingPool::Set(vec![90.0, 135.0])),
            }],
            ..TrainPlan::full()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 || self.batch_size == 0 || self.lr_halve_every == 0 {
            return bad("epochs, batch size and lr_halve_every must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.clip_norm > 0.0) {
            return bad("betas must lie in [0, 1) and the clip norm must be positive".into());
        }
        if self.phases.is_empty() {
            return bad("plan needs at least one phase".into());
        }
        let mut prev = 0;
        for p in &self.phases {
            if p.until_epoch <= prev {
                return bad("phase boundaries must increase".into());
            }
            prev = p.until_epoch;
            if p.svct.is_none() && p.lact.is_none() {
                return bad(format!("phase ending at epoch {} has no settings", p.until_epoch));
            }
            for pool in [&p.svct, &p.lact].into_iter().flatten() {
                pool.validate()?;
            }
        }
        if prev < self.epochs {
            return bad(format!("phases end at epoch {prev} but the plan runs {} epochs", self.epochs));
        }
        Ok(())
    }

    /// Zero-based epoch index to learning rate.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * 0.5f64.powi((epoch / self.lr_halve_every) as i32)
    }

    pub fn phase(&self, epoch: usize) -> Result<&Phase> {
        self.phases
            .iter()
            .find(|p| epoch < p.until_epoch)
            .ok_or_else(|| Error::Invalid(format!("epoch {epoch} is past the last phase")))
    }

    /// Every setting a set-valued phase can produce (ranges excluded).
    pub fn listed_settings(&self) -> Vec<Setting> {
        let mut out = Vec::new();
        for p in &self.phases {
            if let Some(SettingPool::Set(v)) = &p.svct {
                out.extend(v.iter().map(|&n| Setting::svct(n as usize)));
            }
            if let Some(SettingPool::Set(v)) = &p.lact {
                out.extend(v.iter().map(|&d| Setting::lact(d)));
            }
        }
        let mut unique: Vec<Setting> = Vec::new();
        for s in out {
            if !unique.contains(&s) {
                unique.push(s);
            }
        }
        unique
    }
}

/// Draws the scenario uniformly among those the epoch's phase enables, then
/// a setting from that scenario's pool.
pub fn sample_setting(plan: &TrainPlan, epoch: usize, rng: &mut Rng) -> Result<Setting> {
    let phase = plan.phase(epoch)?;
    let pools: Vec<(bool, &SettingPool)> = [(true, &phase.svct), (false, &phase.lact)]
        .into_iter()
        .filter_map(|(svct, p)| p.as_ref().map(|p| (svct, p)))
        .collect();
    let (svct, pool) = pools[rng.int_inclusive(0, pools.len() as u64 - 1) as usize];
    let value = pool.draw(rng);
    Ok(if svct {
        Setting::svct(value as usize)
    } else {
        Setting::lact(value)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_halves_every_twenty_epochs() {
        let p = TrainPlan::full();
        assert_eq!(p.lr_at(20), p.lr_at(0) / 2.0);
        assert_eq!(p.lr_at(19), p.lr);
        assert_eq!(p.lr_at(45), p.lr / 4.0);
        p.validate().unwrap();
        TrainPlan::desk().validate().unwrap();
    }

    #[test]
    fn phase_one_stays_in_its_sets() {
        let p = TrainPlan::full();
        let mut rng = Rng::new(0);
        for _ in 0..2000 {
            match sample_setting(&p, 5, &mut rng).unwrap() {
                Setting::Svct { n_view } => assert!([18, 36, 72, 144].contains(&n_view)),
                Setting::Lact { end_deg, .. } => assert!([90.0, 120.0, 150.0].contains(&end_deg)),
                other => panic!("unexpected {other}"),
            }
        }
        let a: Vec<Setting> = (0..50).map(|_| sample_setting(&p, 50, &mut Rng::new(3)).unwrap()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        assert!(sample_setting(&p, 70, &mut rng).is_err());
    }

    #[test]
    fn rejects_bad_plans() {
        let mut p = TrainPlan::full();
        p.phases[1].until_epoch = 30;
        assert!(p.validate().is_err());
        let mut p = TrainPlan::desk();
        p.lr = 0.0;
        assert!(p.validate().is_err());
        let mut p = TrainPlan::desk();
        p.phases[0].svct = Some(SettingPool::Set(vec![]));
        assert!(p.validate().is_err());
    }
}
