//! Counter-based seeding: every random stream is derived from a global seed and a
//! stream id, so work can be split across threads without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::grid::Grid;

pub type Rng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn normal_grid(rng: &mut Rng, rows: usize, cols: usize) -> Grid {
    Grid::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn uniform_grid(rng: &mut Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Grid {
    use rand::Rng as _;
    Grid::from_fn(rows, cols, |_, _| rng.gen_range(lo..hi))
}
