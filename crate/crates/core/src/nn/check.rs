use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Network, NetworkConfig, ScenePlan};
use crate::autodiff::{gradcheck, Tape, Tensor, Var};
use crate::error::Result;
use crate::geometry::PointCloud;

/// The smallest full network: 16 points, one down and one up stage, with an
/// orientation-encoding block on both sides.
pub fn tiny_network_config(seed: u64) -> NetworkConfig {
    NetworkConfig {
        input_points: 16,
        stage_sizes: vec![4],
        channel_widths: vec![3, 4],
        oe_radii: vec![0.5, 1.0],
        sa_radii: vec![0.6],
        down_oe_dims: vec![Some(vec![3])],
        up_oe_dims: vec![Some(vec![3])],
        max_k: 6,
        seed,
        ..NetworkConfig::default()
    }
}

/// A tiny network with a random 16-point scene and random labels.
pub(crate) struct TinyCase {
    pub net: Network,
    pub plan: ScenePlan,
    pub features: Tensor,
    pub labels: Vec<usize>,
}

pub(crate) fn tiny_case(seed: u64) -> Result<TinyCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
    let mut net = Network::new(tiny_network_config(seed))?;
    // Positive biases keep the narrow ReLU chains alive so every parameter
    // receives gradient, and keep pre-activations off the kink at zero.
    for p in net.store.iter_mut().filter(|p| p.value.rank() == 1) {
        for v in p.value.data_mut() {
            *v = rng.gen_range(0.05..0.3);
        }
    }
    let positions = (0..16).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
    let cloud = PointCloud::new(positions)?;
    Ok(TinyCase {
        plan: net.plan(cloud.positions())?,
        features: net.input_features(&cloud)?,
        labels: (0..16).map(|_| rng.gen_range(0..3)).collect(),
        net,
    })
}

impl TinyCase {
    pub fn loss(&self, tape: &mut Tape) -> Result<Var> {
        let x = tape.leaf(self.features.clone());
        let trace = self.net.forward_with(tape, &self.plan, x)?;
        tape.softmax_cross_entropy(trace.logits, &self.labels)
    }
}

/// Finite-difference check of the tiny network's cross-entropy loss over
/// every parameter. Returns `(parameter, relative error)` in store order.
pub fn tiny_network_gradcheck(seed: u64) -> Result<Vec<(String, f64)>> {
    let case = tiny_case(seed)?;
    let mut store = case.net.store.clone();
    gradcheck::check_params(&mut store, |tape| case.loss(tape))
}
