use serde::{Deserialize, Serialize};

/// Wall time per pipeline stage for one tick, milliseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub receive: f64,
    pub preprocess: f64,
    pub inference: f64,
    pub blend: f64,
    pub send: f64,
    /// Whole tick including world stepping and queueing.
    pub end_to_end: f64,
}

impl StageTimings {
    pub fn stage_sum(&self) -> f64 {
        self.receive + self.preprocess + self.inference + self.blend + self.send
    }

    /// Preprocess + inference + blend.
    pub fn processing(&self) -> f64 {
        self.preprocess + self.inference + self.blend
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: u64,
    pub mean: f64,
    pub max: f64,
}

impl Summary {
    fn push(&mut self, v: f64) {
        self.count += 1;
        self.mean += (v - self.mean) / self.count as f64;
        self.max = self.max.max(v);
    }
}

/// Running per-stage latency statistics of a session.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub receive: Summary,
    pub preprocess: Summary,
    pub inference: Summary,
    pub blend: Summary,
    pub send: Summary,
    pub end_to_end: Summary,
    /// Ticks whose processing exceeded the deadline.
    pub missed_deadlines: u64,
    pub deadline_ms: f64,
}

impl LatencyStats {
    pub fn new(deadline_ms: f64) -> Self {
        Self {
            deadline_ms,
            ..Self::default()
        }
    }

    pub fn ticks(&self) -> u64 {
        self.end_to_end.count
    }

    pub fn record(&mut self, t: &StageTimings) {
        self.receive.push(t.receive);
        self.preprocess.push(t.preprocess);
        self.inference.push(t.inference);
        self.blend.push(t.blend);
        self.send.push(t.send);
        self.end_to_end.push(t.end_to_end);
        if t.end_to_end - t.receive > self.deadline_ms {
            self.missed_deadlines += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn running_summary() {
        let mut s = LatencyStats::new(100.0);
        for (i, e2e) in [10.0, 30.0, 140.0].into_iter().enumerate() {
            s.record(&StageTimings {
                inference: i as f64,
                end_to_end: e2e,
                ..StageTimings::default()
            });
        }
        assert_eq!(s.ticks(), 3);
        assert!((s.inference.mean - 1.0).abs() < 1e-12);
        assert_eq!(s.inference.max, 2.0);
        assert!((s.end_to_end.mean - 60.0).abs() < 1e-12);
        assert_eq!(s.missed_deadlines, 1);
    }
}
