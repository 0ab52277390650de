//! Bookkeeping for the acceptance run: each criterion yields a verdict and
//! the numbers behind it.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub id: u32,
    pub title: &'static str,
    pub passed: bool,
    pub details: Vec<String>,
}

impl Verdict {
    pub fn new(id: u32, title: &'static str) -> Self {
        Self { id, title, passed: true, details: Vec::new() }
    }

    /// Records one check; the verdict fails if any check fails.
    pub fn check(&mut self, ok: bool, detail: impl Into<String>) {
        let mark = if ok { "ok  " } else { "FAIL" };
        self.details.push(format!("{mark} {}", detail.into()));
        self.passed &= ok;
    }

    /// Context that does not affect the verdict.
    pub fn note(&mut self, detail: impl Into<String>) {
        self.details.push(format!("info {}", detail.into()));
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        writeln!(f, "criterion {}: {status} - {}", self.id, self.title)?;
        for d in &self.details {
            writeln!(f, "    {d}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_failed_check_fails_the_verdict() {
        let mut v = Verdict::new(3, "ordering");
        v.check(true, "a < b");
        v.note("raw values");
        assert!(v.passed);
        v.check(false, "b < c");
        assert!(!v.passed);
        let text = v.to_string();
        assert!(text.starts_with("criterion 3: FAIL - ordering\n"));
        assert!(text.contains("    FAIL b < c\n"));
    }
}
