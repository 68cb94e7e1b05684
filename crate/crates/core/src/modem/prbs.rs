//! Maximal-length pseudo-random bit sequences.

use crate::error::{invalid, Result};

/// Feedback taps `(n, k)` of the primitive trinomial `x^n + x^k + 1`.
fn taps(order: u32) -> Option<(u32, u32)> {
    match order {
        7 => Some((7, 6)),
        9 => Some((9, 5)),
        11 => Some((11, 9)),
        15 => Some((15, 14)),
        23 => Some((23, 18)),
        _ => None,
    }
}

/// Fibonacci LFSR producing one full period (`2^order − 1` bits) of the
/// standard PRBS of that order, starting from `seed_state`.
pub fn generate_prbs(order: u32, seed_state: u32) -> Result<Vec<u8>> {
    let (n, k) = taps(order).ok_or_else(|| {
        invalid(format!(
            "unsupported PRBS order {order} (supported: 7, 9, 11, 15, 23)"
        ))
    })?;
    let mask = (1u32 << n) - 1;
    let mut state = seed_state & mask;
    if state == 0 {
        return Err(invalid("PRBS seed state must be non-zero"));
    }
    let len = mask as usize;
    let mut bits = Vec::with_capacity(len);
    for _ in 0..len {
        let fb = ((state >> (n - 1)) ^ (state >> (k - 1))) & 1;
        bits.push(fb as u8);
        state = ((state << 1) | fb) & mask;
    }
    Ok(bits)
}
