pub(crate) mod conv;
pub(crate) mod dense;
pub mod gru;
pub(crate) mod pool;

/// Adds each row of `dy` (`cols` wide) into `db`.
pub(crate) fn accumulate_bias(dy: &[f64], cols: usize, db: &mut [f64]) {
    for row in dy.chunks_exact(cols) {
        for (b, &g) in db.iter_mut().zip(row) {
            *b += g;
        }
    }
}
