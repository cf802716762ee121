use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Trainable;
use crate::error::Result;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Denominator floor for relative error. Below it, differences are judged
/// on an absolute scale, which keeps round-off in the central difference
/// from dominating near-zero gradient entries.
pub const REL_ERROR_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    pub name: String,
    pub len: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub blocks: Vec<BlockReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max)
    }

    pub fn failing(&self) -> Vec<&BlockReport> {
        self.blocks.iter().filter(|b| !b.passed).collect()
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Central-difference check of `loss_and_grad` over every parameter.
///
/// With `dropout_seed` set, every evaluation replays the same dropout masks;
/// with `None` the model runs in eval mode.
pub fn gradient_check<M: Trainable>(
    model: &M,
    batch: &[&M::Example],
    tolerance: f64,
    step: f64,
    dropout_seed: Option<u64>,
) -> Result<GradCheckReport> {
    let eval = |m: &M| -> Result<(f64, Vec<Vec<f64>>)> {
        match dropout_seed {
            Some(s) => {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                m.loss_and_grad(batch, Some(&mut rng))
            }
            None => m.loss_and_grad(batch, None),
        }
    };
    let (_, analytic) = eval(model)?;
    let names: Vec<String> = model.param_blocks().into_iter().map(|(n, _)| n).collect();
    let mut probe = model.clone();
    let mut blocks = Vec::with_capacity(names.len());
    for (bi, name) in names.into_iter().enumerate() {
        let len = analytic[bi].len();
        let (mut max_rel, mut max_abs) = (0.0f64, 0.0f64);
        for i in 0..len {
            let original = probe.param_blocks()[bi].1[i];
            probe.param_blocks_mut()[bi][i] = original + step;
            let plus = eval(&probe)?.0;
            probe.param_blocks_mut()[bi][i] = original - step;
            let minus = eval(&probe)?.0;
            probe.param_blocks_mut()[bi][i] = original;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[bi][i];
            max_rel = max_rel.max(relative_error(a, numeric));
            max_abs = max_abs.max((a - numeric).abs());
        }
        blocks.push(BlockReport {
            name,
            len,
            max_rel_error: max_rel,
            max_abs_error: max_abs,
            passed: max_rel <= tolerance,
        });
    }
    Ok(GradCheckReport { tolerance, blocks })
}
