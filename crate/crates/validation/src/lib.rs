//! Verdict bookkeeping for the acceptance suite. The suite itself lives in
//! `tests/acceptance.rs`; this package sorts after the library packages so
//! their tests run first.

use std::time::Duration;

/// Outcome of one criterion.
#[derive(Debug, Default)]
pub struct Verdict {
    pub id: u32,
    pub title: String,
    /// Named sub-checks; the criterion passes when all of them do.
    pub checks: Vec<(String, bool)>,
    pub notes: Vec<String>,
    pub elapsed: Duration,
}

impl Verdict {
    pub fn new(id: u32, title: impl Into<String>) -> Self {
        Verdict { id, title: title.into(), ..Default::default() }
    }

    pub fn check(&mut self, name: impl Into<String>, ok: bool) -> bool {
        self.checks.push((name.into(), ok));
        ok
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    /// Runtime budget as one more sub-check.
    pub fn budget(&mut self, limit: Duration) {
        let ok = self.elapsed <= limit;
        self.check(format!("runtime {:.1} s <= {} s", self.elapsed.as_secs_f64(), limit.as_secs()), ok);
    }

    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|(_, ok)| *ok)
    }

    /// The verdict line followed by indented sub-checks and notes.
    pub fn render(&self) -> String {
        let mut out = format!(
            "{} criterion {}: {} ({:.1} s)\n",
            if self.passed() { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.elapsed.as_secs_f64()
        );
        for (name, ok) in &self.checks {
            out.push_str(&format!("    [{}] {name}\n", if *ok { "ok" } else { "xx" }));
        }
        for n in &self.notes {
            out.push_str(&format!("    note: {n}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_needs_every_check() {
        let mut v = Verdict::new(1, "demo");
        assert!(!v.passed());
        v.check("a", true);
        assert!(v.passed());
        v.check("b", false);
        assert!(!v.passed());
        assert!(v.render().starts_with("FAIL criterion 1: demo"));
    }
}
