use crate::FiniteHorizonMdp;

/// Precomputed inverse-CDF tables for every feasible kernel row.
///
/// Only the support of each row is stored, with running sums accumulated in
/// state order, so a lookup returns exactly what the linear scan in
/// [`crate::rng::inverse_cdf`] returns for the same uniform draw.
#[derive(Debug, Clone)]
pub(crate) struct KernelSampler {
    num_states: usize,
    num_actions: usize,
    stage_layer: Vec<usize>,
    // per (layer, i, a): range into `support`/`cumulative`
    spans: Vec<(u32, u32)>,
    support: Vec<u32>,
    cumulative: Vec<f64>,
}

impl KernelSampler {
    pub(crate) fn new(mdp: &FiniteHorizonMdp) -> Self {
        let (layers, stage_layer) = mdp.layers();
        let (s, width) = (mdp.num_states(), mdp.num_actions());
        let mut spans = vec![(0, 0); layers.len() * s * width];
        let mut support = Vec::new();
        let mut cumulative = Vec::new();
        for (l, layer) in layers.iter().enumerate() {
            for i in 0..s {
                for &a in mdp.feasible_actions(i) {
                    let start = support.len() as u32;
                    let mut acc = 0.0;
                    for (j, &p) in layer.transition_row(i, a).iter().enumerate() {
                        acc += p;
                        if p > 0.0 {
                            support.push(j as u32);
                            cumulative.push(acc);
                        }
                    }
                    spans[(l * s + i) * width + a] = (start, support.len() as u32);
                }
            }
        }
        Self {
            num_states: s,
            num_actions: width,
            stage_layer: stage_layer.to_vec(),
            spans,
            support,
            cumulative,
        }
    }

    #[inline]
    pub(crate) fn sample(&self, n: usize, i: usize, a: usize, u: f64) -> usize {
        let l = self.stage_layer[n];
        let (lo, hi) = self.spans[(l * self.num_states + i) * self.num_actions + a];
        let cum = &self.cumulative[lo as usize..hi as usize];
        let k = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
        self.support[lo as usize + k] as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::inverse_cdf;
    use crate::StageLayer;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn table_lookup_equals_linear_scan(
            weights in prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..1.0], 1..12),
            u in 0.0f64..1.0,
        ) {
            let total: f64 = weights.iter().sum();
            prop_assume!(total > 0.0);
            let row: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let s = row.len();
            let layer = StageLayer::from_fn(s, 1, |_, _, j| (row[j], 0.0));
            let mdp = FiniteHorizonMdp::stationary(1, s, 1, vec![vec![0]; s], layer, vec![0.0; s]).unwrap();
            let sampler = KernelSampler::new(&mdp);
            prop_assert_eq!(sampler.sample(0, 0, 0, u), inverse_cdf(&row, u));
        }
    }
}
