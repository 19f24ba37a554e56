//! Benchmark fixtures.

use whatif_core::synth::generate_synthetic;
use whatif_core::{make_frame, train, AnalysisFrame, Dataset, Hyperparameters, TrainedModel, UseCase};

pub struct Fixture {
    pub csv: Vec<u8>,
    pub dataset: Dataset,
    pub frame: AnalysisFrame,
    pub rows: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub model: TrainedModel,
}

pub fn fixture(use_case: UseCase, n_rows: usize, hyper: &Hyperparameters) -> Fixture {
    let s = generate_synthetic(use_case, n_rows, 1).expect("synthetic data");
    let frame = make_frame(&s.dataset, use_case.kpi(), None).expect("frame");
    let rows = frame.driver_rows(&s.dataset).expect("rows");
    let y = frame.kpi_values(&s.dataset).expect("kpi");
    let model = train(&s.dataset, &frame, hyper, 1).expect("model");
    Fixture {
        csv: s.csv,
        dataset: s.dataset,
        frame,
        rows,
        y,
        model,
    }
}
