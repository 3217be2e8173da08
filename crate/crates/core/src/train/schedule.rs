//! Linear warmup followed by cosine decay to zero.

use crate::config::OptimizerConfig;
use crate::error::{Error, Result};

/// Steps of linear warmup: `⌈fraction · total⌉`.
pub fn warmup_steps(total: usize, fraction: f64) -> usize {
    // The small slack keeps e.g. 0.1 · 30 = 3.0000000000000004 at 3.
    ((fraction * total as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Multiplier in `[0, 1]` applied to both base learning rates.
pub fn lr_factor(step: usize, total: usize, warmup_fraction: f64) -> Result<f64> {
    if step > total {
        return Err(Error::InvalidArgument(format!("step {step} beyond {total} total steps")));
    }
    if step == total {
        return Ok(0.0);
    }
    let warmup = warmup_steps(total, warmup_fraction);
    if step < warmup {
        return Ok(step as f64 / warmup as f64);
    }
    let progress = (step - warmup) as f64 / (total - warmup) as f64;
    Ok(0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}

/// `(lr_pretrained, lr_new)` at `step` of `total`.
pub fn lr_at(step: usize, total: usize, cfg: &OptimizerConfig) -> Result<(f64, f64)> {
    let f = lr_factor(step, total, cfg.warmup_fraction)?;
    Ok((f * cfg.base_lr_pretrained, f * cfg.base_lr_new))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn paper_defaults() {
        let cfg = OptimizerConfig::default();
        assert_eq!(lr_at(0, 1000, &cfg).unwrap(), (0.0, 0.0));
        assert_eq!(warmup_steps(1000, 0.1), 100);
        assert_eq!(lr_at(100, 1000, &cfg).unwrap(), (5e-6, 5e-5));
        let (a, b) = lr_at(1000, 1000, &cfg).unwrap();
        assert!(a <= 1e-12 && b <= 1e-12);
        assert!(lr_at(1001, 1000, &cfg).is_err());
    }

    #[test]
    fn warmup_rounds_up() {
        assert_eq!(warmup_steps(30, 0.1), 3);
        assert_eq!(warmup_steps(31, 0.1), 4);
        assert_eq!(warmup_steps(5, 0.0), 0);
    }

    #[test]
    fn no_warmup_starts_at_base() {
        assert_eq!(lr_factor(0, 10, 0.0).unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn factor_stays_in_unit_interval(total in 1usize..500, frac in 0.0f64..0.99, s in 0usize..500) {
            let step = s % (total + 1);
            let f = lr_factor(step, total, frac).unwrap();
            prop_assert!((0.0..=1.0).contains(&f));
        }

        #[test]
        fn decay_is_monotone_after_warmup(total in 2usize..300, frac in 0.0f64..0.5) {
            let w = warmup_steps(total, frac);
            let fs: Vec<f64> = (w..=total).map(|s| lr_factor(s, total, frac).unwrap()).collect();
            prop_assert!(fs.windows(2).all(|p| p[1] <= p[0]));
        }
    }
}
