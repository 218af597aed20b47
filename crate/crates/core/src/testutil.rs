use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mlp::{Layer, Mlp};
use crate::{Matrix, Vector};

/// A network with parameters uniform on `[−1, 1]`.
pub fn random_net(seed: u64, n_x: usize, hidden: &[usize], n_y: usize) -> Mlp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let widths: Vec<usize> = std::iter::once(n_x)
        .chain(hidden.iter().copied())
        .chain(std::iter::once(n_y))
        .collect();
    Mlp::new(
        widths
            .windows(2)
            .map(|w| Layer {
                w: Matrix::from_fn(w[1], w[0], |_, _| rng.random_range(-1.0..1.0)),
                b: Vector::from_fn(w[1], |_, _| rng.random_range(-1.0..1.0)),
            })
            .collect(),
    )
    .unwrap()
}

/// A single affine layer `f(x) = W x + b`.
pub fn affine_net(w: Matrix, b: Vector) -> Mlp {
    Mlp::new(vec![Layer { w, b }]).unwrap()
}
