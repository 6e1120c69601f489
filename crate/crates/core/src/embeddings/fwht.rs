use crate::Real;

/// In-place normalized Walsh–Hadamard transform; `data.len()` must be a power of two.
///
/// The `1/√n` scaling makes the transform orthogonal (and its own inverse).
pub fn fwht_normalized<T: Real>(data: &mut [T]) {
    let n = data.len();
    assert!(n.is_power_of_two(), "FWHT length {n} is not a power of two");
    let mut h = 1;
    while h < n {
        for block in data.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
    let scale = T::one() / T::of(n as f64).sqrt();
    for v in data.iter_mut() {
        *v *= scale;
    }
}
