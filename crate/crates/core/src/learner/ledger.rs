use nalgebra::DVector;

/// Trace of one online run.
#[derive(Debug, Clone)]
pub struct RunLedger {
    /// `w(1..n)`, kept only when storage was requested.
    pub iterates: Option<Vec<DVector<f64>>>,
    /// `F(w(t); z_t)` including the loss shift.
    pub step_losses: Vec<f64>,
    /// `κ_obs(t) = ‖w(t) − w(t+1)‖`. Has `n` entries when the learner can
    /// produce `w(n+1)` without seeing another sample, otherwise `n − 1`.
    pub stability_seq: Vec<f64>,
    /// Running mean of the iterates, the averaged predictor `ŵ_n`.
    pub avg_accumulator: DVector<f64>,
    pub n: usize,
    last: Option<DVector<f64>>,
}

impl RunLedger {
    pub fn new(dim: usize, store_iterates: bool) -> Self {
        Self {
            iterates: store_iterates.then(Vec::new),
            step_losses: Vec::new(),
            stability_seq: Vec::new(),
            avg_accumulator: DVector::zeros(dim),
            n: 0,
            last: None,
        }
    }

    /// Records iterate `w(t)` and the loss it suffered.
    pub fn record(&mut self, w: &DVector<f64>, loss: f64) {
        if let Some(prev) = &self.last {
            self.stability_seq.push((w - prev).norm());
        }
        self.n += 1;
        self.avg_accumulator += (w - &self.avg_accumulator) / self.n as f64;
        self.step_losses.push(loss);
        if let Some(it) = self.iterates.as_mut() {
            it.push(w.clone());
        }
        self.last = Some(w.clone());
    }

    /// Closes the run with `w(n+1)` so that `κ_obs(n)` is available.
    pub fn finish(&mut self, next: Option<&DVector<f64>>) {
        if let (Some(next), Some(prev)) = (next, &self.last) {
            self.stability_seq.push((next - prev).norm());
        }
    }

    pub fn averaged_predictor(&self) -> &DVector<f64> {
        &self.avg_accumulator
    }

    pub fn kappa_sum(&self) -> f64 {
        self.stability_seq.iter().sum()
    }

    pub fn cumulative_loss(&self) -> f64 {
        self.step_losses.iter().sum()
    }

    pub fn last_iterate(&self) -> Option<&DVector<f64>> {
        self.last.as_ref()
    }
}
