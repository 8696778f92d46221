use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;
use std::time::Instant;

use crate::dfa::{bundled, DfaTable, Token, SQLI_PROFILE, XSS_PROFILE};
use crate::forest::{train, Dataset, ForestModel, TrainParams};

use super::corpus::{payload_corpus, Sample};
use super::PipelineError;

pub const DETECT_SCHEMA: &str = "flowlens-detect-1";
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Verdict {
    Benign,
    Sqli,
    Xss,
}

impl Verdict {
    pub const ALL: [Verdict; 3] = [Verdict::Benign, Verdict::Sqli, Verdict::Xss];

    pub fn name(self) -> &'static str {
        match self {
            Verdict::Benign => "benign",
            Verdict::Sqli => "sqli",
            Verdict::Xss => "xss",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Verdict {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Verdict::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| PipelineError::InvalidConfig(format!("unknown verdict {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectResult {
    pub id: u64,
    pub verdict: Verdict,
    /// Probability of the verdict's class.
    pub confidence: f64,
    pub tokens: usize,
    /// Tokenization plus prediction, in microseconds.
    pub latency_us: f64,
}

/// The two bundled token tables.
pub struct Profiles {
    pub sqli: DfaTable,
    pub xss: DfaTable,
}

impl Profiles {
    pub fn bundled() -> &'static Profiles {
        static P: OnceLock<Profiles> = OnceLock::new();
        P.get_or_init(|| Profiles {
            sqli: bundled(SQLI_PROFILE),
            xss: bundled(XSS_PROFILE),
        })
    }

    /// Both token histograms (each followed by its token total and
    /// unmatched byte count), then the payload length.
    pub fn n_features(&self) -> usize {
        self.sqli.n_tokens() + 2 + self.xss.n_tokens() + 2 + 1
    }

    /// Writes the feature vector into `out` and returns the token count.
    pub fn features_into(&self, payload: &[u8], tokens: &mut Vec<Token>, out: &mut [u32]) -> usize {
        out.fill(0);
        let split = self.sqli.n_tokens() + 2;
        tokens.clear();
        let s = self.sqli.tokenize_into(payload, tokens);
        self.sqli.histogram_into(tokens, s, &mut out[..split]);
        let mut n = tokens.len();
        tokens.clear();
        let s = self.xss.tokenize_into(payload, tokens);
        self.xss.histogram_into(tokens, s, &mut out[split..split + self.xss.n_tokens() + 2]);
        n += tokens.len();
        *out.last_mut().unwrap() = payload.len().min(u32::MAX as usize) as u32;
        n
    }

    pub fn features(&self, payload: &[u8]) -> Vec<f64> {
        let mut h = vec![0u32; self.n_features()];
        self.features_into(payload, &mut Vec::new(), &mut h);
        h.into_iter().map(f64::from).collect()
    }

    pub fn dataset(&self, samples: &[Sample]) -> Dataset {
        let names: Vec<&str> = Verdict::ALL.iter().map(|v| v.name()).collect();
        let mut d = Dataset::with_classes(DETECT_SCHEMA, self.n_features(), &names);
        for s in samples {
            d.push_id(&self.features(s.payload.as_bytes()), s.verdict as u32)
                .expect("token counts are finite");
        }
        d
    }
}

/// Maps class probabilities to a verdict: an attack class wins once its
/// probability reaches `threshold`; the larger one wins if both do, SQLi on
/// ties.
pub fn decide(p_sqli: f64, p_xss: f64, threshold: f64) -> Verdict {
    if p_sqli < threshold && p_xss < threshold {
        Verdict::Benign
    } else if p_sqli >= p_xss {
        Verdict::Sqli
    } else {
        Verdict::Xss
    }
}

pub struct Detector<'a> {
    profiles: &'a Profiles,
    model: &'a ForestModel,
    class_of: [usize; 3],
    threshold: f64,
}

impl<'a> Detector<'a> {
    pub fn new(profiles: &'a Profiles, model: &'a ForestModel, threshold: f64) -> Result<Self, PipelineError> {
        model.check_schema(DETECT_SCHEMA, profiles.n_features())?;
        if !(0.0..=1.0).contains(&threshold) {
            return Err(PipelineError::InvalidConfig(format!("threshold {threshold} is outside [0, 1]")));
        }
        let mut class_of = [0; 3];
        for v in Verdict::ALL {
            class_of[v as usize] = model
                .classes
                .iter()
                .position(|c| c == v.name())
                .ok_or_else(|| PipelineError::InvalidConfig(format!("model has no {v:?} class")))?;
        }
        Ok(Detector {
            profiles,
            model,
            class_of,
            threshold,
        })
    }

    /// Bundled profiles with the model trained on the bundled corpus.
    pub fn bundled(threshold: f64) -> Result<Detector<'static>, PipelineError> {
        Detector::new(Profiles::bundled(), bundled_model(), threshold)
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn detect(&self, id: u64, payload: &[u8]) -> DetectResult {
        let mut tokens = Vec::with_capacity(64);
        let mut h = vec![0u32; self.profiles.n_features()];
        let mut x = vec![0.0; h.len()];
        let mut probs = vec![0.0; self.model.n_classes()];

        let t = Instant::now();
        let n = self.profiles.features_into(payload, &mut tokens, &mut h);
        for (x, &c) in x.iter_mut().zip(&h) {
            *x = c as f64;
        }
        self.model
            .predict_proba_into(&x, &mut probs)
            .expect("schema checked at construction");
        let verdict = decide(probs[self.class_of[1]], probs[self.class_of[2]], self.threshold);
        let latency_us = t.elapsed().as_nanos() as f64 / 1000.0;
        DetectResult {
            id,
            verdict,
            confidence: probs[self.class_of[verdict as usize]],
            tokens: n,
            latency_us,
        }
    }
}

pub fn detect_payload(detector: &Detector<'_>, id: u64, payload: &[u8]) -> DetectResult {
    detector.detect(id, payload)
}

/// Forest trained on the bundled corpus with default parameters.
pub fn bundled_model() -> &'static ForestModel {
    static M: OnceLock<ForestModel> = OnceLock::new();
    M.get_or_init(|| {
        let ds = Profiles::bundled().dataset(&payload_corpus());
        train(&ds, &TrainParams::default()).expect("bundled corpus trains")
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_payloads() {
        let d = Detector::bundled(DEFAULT_THRESHOLD).unwrap();
        assert_eq!(d.detect(0, b"1' OR '1'='1").verdict, Verdict::Sqli);
        assert_eq!(d.detect(1, b"<script>alert(1)</script>").verdict, Verdict::Xss);
        let r = d.detect(2, b"hello world 42");
        assert_eq!(r.verdict, Verdict::Benign);
        assert_eq!(r.tokens, 6);
        let e = d.detect(3, b"");
        assert_eq!(e.verdict, Verdict::Benign);
        assert!(e.confidence > 0.0);
    }

    #[test]
    fn decision_rule() {
        assert_eq!(decide(0.49, 0.49, 0.5), Verdict::Benign);
        assert_eq!(decide(0.5, 0.1, 0.5), Verdict::Sqli);
        assert_eq!(decide(0.5, 0.5, 0.5), Verdict::Sqli);
        assert_eq!(decide(0.3, 0.6, 0.5), Verdict::Xss);
        assert_eq!(decide(0.3, 0.2, 0.25), Verdict::Sqli);
    }

    #[test]
    fn feature_layout() {
        let p = Profiles::bundled();
        let f = p.features(b"1' OR '1'='1");
        assert_eq!(f.len(), p.n_features());
        let or = p.sqli.token_id("OR").unwrap() as usize;
        assert_eq!(f[or], 1.0);
        assert_eq!(f[p.sqli.n_tokens()], 9.0);
        assert_eq!(*f.last().unwrap(), 12.0);
    }

    #[test]
    fn rejects_other_models() {
        let m = crate::forest::tests::stub();
        assert!(matches!(
            Detector::new(Profiles::bundled(), &m, 0.5),
            Err(PipelineError::Model(_))
        ));
        assert!(Detector::new(Profiles::bundled(), bundled_model(), 1.5).is_err());
    }
}
