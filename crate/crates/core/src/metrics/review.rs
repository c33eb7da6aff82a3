//! Expert-review response distributions and inter-rater agreement.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::MetricError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Realism {
    Real,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Agreement {
    Full,
    Partial,
    Disagree,
}

impl FromStr for Realism {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "real" => Ok(Self::Real),
            "synthetic" => Ok(Self::Synthetic),
            other => Err(MetricError::Invalid(format!(
                "unknown realism answer `{other}`"
            ))),
        }
    }
}

impl FromStr for Agreement {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(Self::Full),
            "partial" => Ok(Self::Partial),
            "disagree" => Ok(Self::Disagree),
            other => Err(MetricError::Invalid(format!(
                "unknown agreement answer `{other}`"
            ))),
        }
    }
}

impl fmt::Display for Realism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Real => "real",
            Self::Synthetic => "synthetic",
        })
    }
}

impl fmt::Display for Agreement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::Partial => "partial",
            Self::Disagree => "disagree",
        })
    }
}

/// One rater's answers for one image. `method` names the generator that
/// produced the image, if the sheet records it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReviewRecord {
    pub image_id: String,
    pub method: Option<String>,
    pub rater_id: String,
    pub realism: Realism,
    pub agreement: Agreement,
    pub free_text: Option<String>,
}

/// Percentages (0–100) of each answer for one rater and method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RaterDistribution {
    pub method: String,
    pub rater_id: String,
    pub n: usize,
    pub real_pct: f64,
    pub synthetic_pct: f64,
    pub full_pct: f64,
    pub partial_pct: f64,
    pub disagree_pct: f64,
}

/// Percent of co-rated images on which every rater gave the same answer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterRater {
    pub method: String,
    pub co_rated: usize,
    pub realism_pct: Option<f64>,
    pub clinical_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReviewStats {
    pub distributions: Vec<RaterDistribution>,
    pub inter_rater: Vec<InterRater>,
    pub overall: InterRater,
}

pub const ALL_METHODS: &str = "all";

fn pct(k: usize, n: usize) -> f64 {
    100.0 * k as f64 / n as f64
}

fn method_of(r: &ReviewRecord) -> &str {
    r.method.as_deref().unwrap_or(ALL_METHODS)
}

fn inter_rater(method: &str, records: &[&ReviewRecord]) -> InterRater {
    let mut by_image: BTreeMap<(&str, &str), Vec<&ReviewRecord>> = BTreeMap::new();
    for r in records {
        by_image
            .entry((method_of(r), &r.image_id))
            .or_default()
            .push(r);
    }
    let shared: Vec<&Vec<&ReviewRecord>> = by_image.values().filter(|v| v.len() >= 2).collect();
    let co_rated = shared.len();
    let agree = |same: fn(&ReviewRecord, &ReviewRecord) -> bool| {
        (co_rated > 0).then(|| {
            pct(
                shared
                    .iter()
                    .filter(|v| v.iter().all(|r| same(r, v[0])))
                    .count(),
                co_rated,
            )
        })
    };
    InterRater {
        method: method.to_string(),
        co_rated,
        realism_pct: agree(|a, b| a.realism == b.realism),
        clinical_pct: agree(|a, b| a.agreement == b.agreement),
    }
}

/// Per-rater answer distributions and inter-rater agreement, per method and
/// overall. Agreement is `None` when no image was rated by two raters.
pub fn review_stats(records: &[ReviewRecord]) -> Result<ReviewStats, MetricError> {
    if records.is_empty() {
        return Err(MetricError::Empty("no review records".into()));
    }
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert((method_of(r), r.image_id.as_str(), r.rater_id.as_str())) {
            return Err(MetricError::DuplicateId(format!(
                "rater `{}` rated `{}` twice",
                r.rater_id, r.image_id
            )));
        }
    }

    let mut by_method: BTreeMap<&str, Vec<&ReviewRecord>> = BTreeMap::new();
    for r in records {
        by_method.entry(method_of(r)).or_default().push(r);
    }

    let mut distributions = Vec::new();
    let mut inter = Vec::new();
    for (method, rs) in &by_method {
        let mut by_rater: BTreeMap<&str, Vec<&ReviewRecord>> = BTreeMap::new();
        for r in rs {
            by_rater.entry(&r.rater_id).or_default().push(r);
        }
        for (rater, answers) in by_rater {
            let n = answers.len();
            let count = |f: &dyn Fn(&ReviewRecord) -> bool| answers.iter().filter(|r| f(r)).count();
            distributions.push(RaterDistribution {
                method: method.to_string(),
                rater_id: rater.to_string(),
                n,
                real_pct: pct(count(&|r| r.realism == Realism::Real), n),
                synthetic_pct: pct(count(&|r| r.realism == Realism::Synthetic), n),
                full_pct: pct(count(&|r| r.agreement == Agreement::Full), n),
                partial_pct: pct(count(&|r| r.agreement == Agreement::Partial), n),
                disagree_pct: pct(count(&|r| r.agreement == Agreement::Disagree), n),
            });
        }
        inter.push(inter_rater(method, rs));
    }
    let all: Vec<&ReviewRecord> = records.iter().collect();
    Ok(ReviewStats {
        distributions,
        inter_rater: inter,
        overall: inter_rater(ALL_METHODS, &all),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(image: usize, rater: &str, realism: Realism, agreement: Agreement) -> ReviewRecord {
        ReviewRecord {
            image_id: format!("img{image}"),
            method: None,
            rater_id: rater.into(),
            realism,
            agreement,
            free_text: None,
        }
    }

    #[test]
    fn identical_raters_agree_fully() {
        let mut rs = Vec::new();
        for i in 0..10 {
            let real = if i % 3 == 0 {
                Realism::Real
            } else {
                Realism::Synthetic
            };
            rs.push(rec(i, "a", real, Agreement::Partial));
            rs.push(rec(i, "b", real, Agreement::Partial));
        }
        let s = review_stats(&rs).unwrap();
        assert_eq!(s.overall.co_rated, 10);
        assert_eq!(s.overall.realism_pct, Some(100.0));
        assert_eq!(s.overall.clinical_pct, Some(100.0));
        assert_eq!(s.distributions[0].real_pct, 40.0);
    }

    #[test]
    fn four_disagreements_in_ten() {
        let mut rs = Vec::new();
        for i in 0..10 {
            rs.push(rec(i, "a", Realism::Real, Agreement::Full));
            let other = if i < 4 {
                Realism::Synthetic
            } else {
                Realism::Real
            };
            rs.push(rec(i, "b", other, Agreement::Full));
        }
        let s = review_stats(&rs).unwrap();
        assert_eq!(s.overall.realism_pct, Some(60.0));
        assert_eq!(s.overall.clinical_pct, Some(100.0));
    }

    #[test]
    fn single_rater_has_no_agreement() {
        let s = review_stats(&[rec(0, "a", Realism::Real, Agreement::Full)]).unwrap();
        assert_eq!(s.overall.co_rated, 0);
        assert_eq!(s.overall.realism_pct, None);
        assert!(review_stats(&[]).is_err());
    }

    #[test]
    fn duplicate_rating_rejected() {
        let r = rec(0, "a", Realism::Real, Agreement::Full);
        assert!(review_stats(&[r.clone(), r]).is_err());
    }

    #[test]
    fn parse_answers() {
        assert_eq!("Synthetic".parse::<Realism>().unwrap(), Realism::Synthetic);
        assert_eq!(
            " disagree".parse::<Agreement>().unwrap(),
            Agreement::Disagree
        );
        assert!("maybe".parse::<Agreement>().is_err());
    }
}
