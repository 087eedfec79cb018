//! Shared fixtures for the pipeline benchmarks.

use shadecal::dataset::SampleRow;
use shadecal::synth::{
    default_chart_references, default_shade_codes, synth_chart, synth_prediction_dataset,
    ForwardCameraModel, MixingModel, SynthChart,
};

pub fn bench_chart(seed: u64) -> SynthChart {
    let cam = ForwardCameraModel::seeded(seed, 0.0);
    synth_chart(&default_chart_references(), &cam).expect("chart generation")
}

pub fn bench_rows(seed: u64, n: usize) -> Vec<SampleRow> {
    let mixing = MixingModel::seeded(seed, 0.5);
    synth_prediction_dataset(19, &default_shade_codes(), n, &mixing, seed)
        .expect("dataset generation")
        .rows
}
