/// Linear ε decay from `start` to `end` over the first `fraction` of
/// `total_steps`, then constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub fraction: f64,
    pub total_steps: usize,
}

impl EpsilonSchedule {
    pub fn value(&self, step: usize) -> f64 {
        let span = self.fraction * self.total_steps as f64;
        if span <= 0.0 {
            return self.end;
        }
        let progress = step as f64 / span;
        if progress >= 1.0 {
            return self.end;
        }
        self.start + progress * (self.end - self.start)
    }
}
