use crate::encoder::{LayerOutputs, PoolingStrategy};
use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{lit, Real};

/// Reduces per-token states to one `[d]` sentence vector.
pub fn pool<T: Real>(
    tape: &mut Tape<T>,
    outputs: &LayerOutputs<T>,
    strategy: PoolingStrategy,
) -> Result<Var> {
    let mask = &outputs.mask;
    let count = mask.iter().filter(|&&m| m == 1).count();
    if count == 0 {
        return Err(Error::Degenerate("cannot pool an all-padding sequence".into()));
    }
    let layers = outputs.hidden.len() - 1;
    let mean_weights = || -> Vec<T> {
        let w: T = lit(1.0 / count as f64);
        mask.iter().map(|&m| if m == 1 { w } else { T::zero() }).collect()
    };
    match strategy {
        PoolingStrategy::Cls => {
            let mut w = vec![T::zero(); mask.len()];
            w[0] = T::one();
            tape.weighted_sum_rows(outputs.last(), w)
        }
        PoolingStrategy::Mean => tape.weighted_sum_rows(outputs.last(), mean_weights()),
        PoolingStrategy::FirstLast | PoolingStrategy::Top2 => {
            let first = match strategy {
                PoolingStrategy::FirstLast => outputs.hidden[1.min(layers)],
                _ => outputs.hidden[layers - 1],
            };
            let avg = tape.add(first, outputs.last())?;
            let avg = tape.scale(avg, lit(0.5));
            tape.weighted_sum_rows(avg, mean_weights())
        }
    }
}
