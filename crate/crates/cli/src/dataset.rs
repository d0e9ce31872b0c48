//! Parallel training-set construction.
//!
//! Dataset building is embarrassingly parallel: every (base, variant) pair
//! derives its own augmentation and reference seeds, so no sample depends on
//! any other. This builder fans the pairs out over a rayon pool and collects
//! them back in index order, producing output identical to the sequential
//! construction in the core crate — a property the tests assert directly.

use rayon::prelude::*;

use diffplace_core::graph::normalize_netlist;
use diffplace_core::netlist::{filter_macro_connectivity, Netlist};
use diffplace_core::rng::{derive_seed, stream};
use diffplace_core::training::{
    augment_netlist, make_reference_placement, Dataset, TrainSample,
};
use diffplace_core::CoreError;

/// Parallel twin of the sequential dataset builder: same seeds per
/// (base, variant), same sample order, same bytes.
pub fn build_dataset_parallel(
    bases: &[Netlist],
    n_aug: usize,
    seed: u64,
) -> Result<Dataset, CoreError> {
    let pairs: Vec<(usize, usize)> =
        (0..bases.len()).flat_map(|b| (0..n_aug).map(move |a| (b, a))).collect();

    let built: Vec<Result<(TrainSample, bool), CoreError>> = pairs
        .par_iter()
        .map(|&(b, a)| {
            let aug_seed = derive_seed(seed, &[stream::AUGMENT, b as u64, a as u64]);
            let augmented = augment_netlist(&bases[b], aug_seed)?;
            let degraded = !augmented.fully_simple;
            let filtered = filter_macro_connectivity(&augmented.netlist);
            let (normalized, _) = normalize_netlist(&filtered)?;
            let ref_seed = derive_seed(seed, &[stream::REFERENCE, b as u64, a as u64]);
            let x0 = make_reference_placement(&normalized, ref_seed)?;
            Ok((TrainSample { netlist: normalized, x0 }, degraded))
        })
        .collect();

    let mut samples = Vec::with_capacity(pairs.len());
    let mut degraded = 0usize;
    for item in built {
        let (sample, was_degraded) = item?;
        if was_degraded {
            degraded += 1;
        }
        samples.push(sample);
    }
    Ok(Dataset { samples, degraded })
}
