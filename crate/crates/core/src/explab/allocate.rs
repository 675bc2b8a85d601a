use crate::canvas::RunConfig;

/// Constants of the dynamic experiment-budget rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepeatPolicy {
    pub gain: f64,
    pub cut: f64,
    pub elite_bonus: u32,
    pub cap_factor: u32,
}

impl Default for RepeatPolicy {
    fn default() -> Self {
        RepeatPolicy::from_config(&RunConfig::default())
    }
}

impl RepeatPolicy {
    pub fn from_config(cfg: &RunConfig) -> Self {
        RepeatPolicy {
            gain: cfg.repeat_gain,
            cut: cfg.repeat_cut,
            elite_bonus: cfg.elite_repeat_bonus,
            cap_factor: cfg.repeat_cap_factor,
        }
    }
}

/// Experiment attempts granted to a candidate after its first result.
///
/// Improvement over the parent scales `base` up, regression scales it down,
/// an elite parent adds a fixed bonus, and the result is clamped to
/// `[2, cap_factor * base]`. A failed first attempt counts as regression.
pub fn allocate_repeats(base: u32, delta: f64, parent_is_elite: bool, policy: &RepeatPolicy) -> u32 {
    let b = base.max(1) as f64;
    let mut repeats = if delta > 0.0 {
        (policy.gain * b).ceil()
    } else if delta < 0.0 || delta.is_nan() {
        (policy.cut * b).floor().max(2.0)
    } else {
        b
    } as u32;
    if parent_is_elite {
        repeats += policy.elite_bonus;
    }
    let cap = (policy.cap_factor * base.max(1)).max(2);
    repeats.clamp(2, cap)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule() {
        let p = RepeatPolicy::default();
        assert_eq!(allocate_repeats(5, 0.3, false, &p), 8);
        assert_eq!(allocate_repeats(5, -0.2, false, &p), 2);
        assert_eq!(allocate_repeats(5, 0.0, true, &p), 7);
        assert_eq!(allocate_repeats(5, f64::NEG_INFINITY, false, &p), 2);
        assert_eq!(allocate_repeats(1, 1.0, true, &p), 3);
        assert_eq!(allocate_repeats(10, 1.0, true, &p), 17);
    }
}
