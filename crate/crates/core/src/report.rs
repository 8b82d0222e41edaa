use serde::Serialize;

/// Outcome of a randomized validator: how many samples ran and every
/// violation observed. Passing means no violations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub samples: usize,
    pub violations: Vec<String>,
}

impl CheckReport {
    pub fn new(check: impl Into<String>) -> Self {
        CheckReport {
            check: check.into(),
            samples: 0,
            violations: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// Record a violation; the list is capped so reports stay readable.
    pub fn violation(&mut self, msg: impl Into<String>) {
        if self.violations.len() < 20 {
            self.violations.push(msg.into());
        }
    }

    pub fn merge(&mut self, other: CheckReport) {
        self.samples = self.samples.max(other.samples);
        for v in other.violations {
            self.violation(format!("{}: {v}", other.check));
        }
    }
}
