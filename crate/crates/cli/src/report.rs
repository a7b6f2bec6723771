use agilecc_core::Label;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRow {
    pub function_id: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    /// `(easy, hard)` tree votes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub votes: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recommended_flags: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quarantine_reason: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub easy: usize,
    pub hard: usize,
    pub quarantined: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub training_fingerprint: String,
    pub flags_basic: Vec<String>,
    pub flags_aggr: Vec<String>,
    pub rows: Vec<ClassificationRow>,
    pub summary: Summary,
}

impl ClassificationReport {
    pub fn new(training_fingerprint: String, flags_basic: Vec<String>, flags_aggr: Vec<String>) -> Self {
        ClassificationReport {
            training_fingerprint,
            flags_basic,
            flags_aggr,
            rows: Vec::new(),
            summary: Summary::default(),
        }
    }

    pub fn push_label(&mut self, function_id: String, name: String, label: Label, votes: [usize; 2]) {
        let flags = match label {
            Label::Easy => {
                self.summary.easy += 1;
                self.flags_basic.clone()
            }
            Label::Hard => {
                self.summary.hard += 1;
                self.flags_aggr.clone()
            }
        };
        self.rows.push(ClassificationRow {
            function_id,
            name,
            label: Some(label),
            votes: Some(votes),
            recommended_flags: Some(flags),
            quarantine_reason: None,
        });
    }

    pub fn push_quarantine(&mut self, function_id: String, name: String, reason: String) {
        self.summary.quarantined += 1;
        self.rows.push(ClassificationRow {
            function_id,
            name,
            label: None,
            votes: None,
            recommended_flags: None,
            quarantine_reason: Some(reason),
        });
    }

    /// Checks row shapes, flag recommendations and summary counts.
    pub fn validate(&self) -> Result<(), String> {
        let mut seen = Summary::default();
        for r in &self.rows {
            match (&r.label, &r.votes, &r.recommended_flags, &r.quarantine_reason) {
                (Some(l), Some(_), Some(flags), None) => {
                    let want = match l {
                        Label::Easy => {
                            seen.easy += 1;
                            &self.flags_basic
                        }
                        Label::Hard => {
                            seen.hard += 1;
                            &self.flags_aggr
                        }
                    };
                    if flags != want {
                        return Err(format!("`{}` recommends {flags:?}, expected {want:?}", r.function_id));
                    }
                }
                (None, None, None, Some(_)) => seen.quarantined += 1,
                _ => return Err(format!("row `{}` is neither labeled nor quarantined", r.function_id)),
            }
        }
        if seen != self.summary {
            return Err(format!("summary {:?} does not match rows {seen:?}", self.summary));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn easy_rows_get_basic_flags() {
        let mut r = ClassificationReport::new("fp".into(), vec!["-O1".into()], vec!["-O3".into()]);
        r.push_label("a.c:f".into(), "f".into(), Label::Easy, [3, 2]);
        r.push_label("a.c:g".into(), "g".into(), Label::Hard, [1, 4]);
        r.push_quarantine("a.c:h".into(), "h".into(), "parse error".into());
        assert_eq!(r.rows[0].recommended_flags.as_deref(), Some(&["-O1".to_string()][..]));
        assert_eq!(r.rows[1].recommended_flags.as_deref(), Some(&["-O3".to_string()][..]));
        assert_eq!(r.summary, Summary { easy: 1, hard: 1, quarantined: 1 });
        r.validate().unwrap();
        r.rows[0].recommended_flags = Some(vec!["-O3".into()]);
        assert!(r.validate().is_err());
    }
}
