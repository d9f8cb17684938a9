use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::microdata::{RoleHint, Table};
use crate::rng::{stream_rng, Stream};

/// Mask flagging a uniformly random `round(p * n)` cells of every
/// semi-sensitive attribute. Other columns keep their current flags.
pub fn density_mask(table: &Table, p: f64, seed: u64) -> Result<Vec<Vec<bool>>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("density {p} is outside [0, 1]")));
    }
    let n = table.len();
    let count = ((p * n as f64).round() as usize).min(n);
    let mut rng = stream_rng(seed, Stream::Density);
    let mut mask = table.mask().to_vec();
    for (j, a) in table.schema().attrs().iter().enumerate() {
        if a.role != RoleHint::SemiSensitive {
            continue;
        }
        for row in mask.iter_mut() {
            row[j] = false;
        }
        for r in sample(&mut rng, n, count) {
            mask[r][j] = true;
        }
    }
    Ok(mask)
}
