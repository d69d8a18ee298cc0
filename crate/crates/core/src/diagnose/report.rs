//! The structured diagnostic record and its line-oriented text form.

use serde::{Deserialize, Serialize};

use crate::degrade::severity::{SEVERITY_MAX, SEVERITY_MIN};
use crate::degrade::Degradation;
use crate::error::{Error, Result};

pub const REPORT_SCHEMA: &str = "rnr-report/1";
/// A degradation is reported present iff its severity exceeds this.
pub const PRESENCE_THRESHOLD: f64 = 20.0;
pub const MAX_SCENE_WORDS: usize = 30;

const SCHEMA_PREFIX: &str = "Report schema: ";
const PARAMS_PREFIX: &str = "Degradation parameters: ";
const SCENE_PREFIX: &str = "Clean scene description: ";
const LINE_LABELS: [&str; 4] = ["Fog degradation", "Motion blur", "Rain streaks", "Gaussian noise"];

/// Words a clean-scene description must not contain.
const BLOCKED_WORDS: &[&str] = &[
    "artifact", "artifacts", "blur", "blurred", "blurry", "blurriness", "degradation",
    "degradations", "degraded", "fog", "foggy", "grain", "grainy", "haze", "hazy", "mist",
    "misty", "noise", "noisy", "rain", "raindrop", "raindrops", "rainy", "shake", "smear",
    "smeared", "streak", "streaks",
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FogReading {
    pub airlight: [f64; 3],
    pub t_mean: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlurReading {
    pub direction: f64,
    pub length: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RainReading {
    pub coverage: f64,
    pub slant: f64,
}

/// Single-line, whitespace-normalized text of at most 30 words with no degradation vocabulary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SceneDescription(String);

impl SceneDescription {
    pub fn new(text: &str) -> Result<Self> {
        let words: Vec<&str> = text.split_whitespace().collect();
        if words.is_empty() {
            return Err(Error::param("scene_description", "must not be empty"));
        }
        if words.len() > MAX_SCENE_WORDS {
            return Err(Error::param(
                "scene_description",
                format!("{} words exceeds the limit of {MAX_SCENE_WORDS}", words.len()),
            ));
        }
        let lower = text.to_lowercase();
        let tokens: Vec<&str> = lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .collect();
        if let Some(bad) = tokens.iter().find(|t| BLOCKED_WORDS.contains(t)) {
            return Err(Error::param(
                "scene_description",
                format!("mentions degradation vocabulary `{bad}`"),
            ));
        }
        if tokens.windows(2).any(|p| p == ["low", "contrast"]) {
            return Err(Error::param("scene_description", "mentions degradation vocabulary `low contrast`"));
        }
        Ok(Self(words.join(" ")))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for SceneDescription {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        let d = Self::new(&s)?;
        if d.0 != s {
            return Err(Error::param("scene_description", "must be whitespace-normalized"));
        }
        Ok(d)
    }
}

impl From<SceneDescription> for String {
    fn from(d: SceneDescription) -> String {
        d.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticReport {
    /// Indexed by [`Degradation::index`].
    pub presence: [bool; 4],
    /// On the 0.1 grid in `[1, 100]`.
    pub severity: [f64; 4],
    pub fog: FogReading,
    pub blur: BlurReading,
    pub rain: RainReading,
    pub noise_sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_description: Option<SceneDescription>,
}

/// Rounds to one decimal, the resolution of the text form.
pub fn quantize_severity(s: f64) -> f64 {
    ((s.clamp(SEVERITY_MIN, SEVERITY_MAX) * 10.0).round()) / 10.0
}

impl DiagnosticReport {
    /// Builds a report from raw severities; presence follows from the quantized scores.
    pub fn new(severity: [f64; 4], fog: FogReading, blur: BlurReading, rain: RainReading, noise_sigma: f64) -> Self {
        let severity = severity.map(quantize_severity);
        Self {
            presence: severity.map(|s| s > PRESENCE_THRESHOLD),
            severity,
            fog,
            blur,
            rain,
            noise_sigma,
            scene_description: None,
        }
    }

    /// No degradation detected, neutral parameter readings.
    pub fn clean() -> Self {
        Self::new(
            [SEVERITY_MIN; 4],
            FogReading { airlight: [1.0; 3], t_mean: 1.0 },
            BlurReading { direction: 0.0, length: 0.0 },
            RainReading { coverage: 0.0, slant: 0.0 },
            0.0,
        )
    }

    pub fn is_present(&self, d: Degradation) -> bool {
        self.presence[d.index()]
    }

    pub fn severity_of(&self, d: Degradation) -> f64 {
        self.severity[d.index()]
    }

    pub fn total_severity(&self) -> f64 {
        self.severity.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, &s) in self.severity.iter().enumerate() {
            if !(SEVERITY_MIN..=SEVERITY_MAX).contains(&s) || quantize_severity(s) != s {
                return Err(Error::Invariant(format!("severity[{i}] = {s} is not a 0.1-grid score in [1,100]")));
            }
            if self.presence[i] != (s > PRESENCE_THRESHOLD) {
                return Err(Error::Invariant(format!(
                    "presence[{i}] disagrees with severity {s} and threshold {PRESENCE_THRESHOLD}"
                )));
            }
        }
        let values = self.parameter_values();
        if let Some((name, v)) = values.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Invariant(format!("parameter {name} = {v} is not finite")));
        }
        Ok(())
    }

    fn parameter_values(&self) -> [(&'static str, f64); 9] {
        let a = self.fog.airlight;
        [
            ("airlight_r", a[0]),
            ("airlight_g", a[1]),
            ("airlight_b", a[2]),
            ("transmission_mean", self.fog.t_mean),
            ("blur_direction", self.blur.direction),
            ("blur_length", self.blur.length),
            ("rain_coverage", self.rain.coverage),
            ("rain_slant", self.rain.slant),
            ("noise_sigma", self.noise_sigma),
        ]
    }

    fn set_parameter(&mut self, index: usize, v: f64) {
        match index {
            0..=2 => self.fog.airlight[index] = v,
            3 => self.fog.t_mean = v,
            4 => self.blur.direction = v,
            5 => self.blur.length = v,
            6 => self.rain.coverage = v,
            7 => self.rain.slant = v,
            _ => self.noise_sigma = v,
        }
    }
}

/// Fixed template; parameters use shortest round-trip decimal form.
pub fn render_report(r: &DiagnosticReport) -> String {
    let mut out = format!("{SCHEMA_PREFIX}{REPORT_SCHEMA}\n");
    for (i, label) in LINE_LABELS.iter().enumerate() {
        let yn = if r.presence[i] { "Yes" } else { "No" };
        out.push_str(&format!("{label}: {yn} ({:.1})\n", r.severity[i]));
    }
    let params: Vec<String> = r
        .parameter_values()
        .iter()
        .map(|(name, v)| format!("{name}={v:?}"))
        .collect();
    out.push_str(PARAMS_PREFIX);
    out.push_str(&params.join("; "));
    out.push('\n');
    if let Some(d) = &r.scene_description {
        out.push_str(&format!("{SCENE_PREFIX}{}\n", d.as_str()));
    }
    out
}

fn parse_err(line: usize, expected: impl Into<String>) -> Error {
    Error::Parse {
        line,
        expected: expected.into(),
    }
}

fn parse_severity_line(line_no: usize, line: &str, label: &str) -> Result<(bool, f64)> {
    let expected = || parse_err(line_no, format!("`{label}: Yes|No (<score with one decimal>)`"));
    let rest = line
        .strip_prefix(label)
        .and_then(|r| r.strip_prefix(": "))
        .ok_or_else(expected)?;
    let (yn, score) = rest.split_once(' ').ok_or_else(expected)?;
    let present = match yn {
        "Yes" => true,
        "No" => false,
        _ => return Err(expected()),
    };
    let digits = score
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(expected)?;
    let (_, frac) = digits.split_once('.').ok_or_else(expected)?;
    if frac.len() != 1 {
        return Err(expected());
    }
    let v: f64 = digits.parse().map_err(|_| expected())?;
    if !(SEVERITY_MIN..=SEVERITY_MAX).contains(&v) {
        return Err(parse_err(line_no, format!("{label} score in [1.0, 100.0]")));
    }
    if present != (v > PRESENCE_THRESHOLD) {
        return Err(parse_err(
            line_no,
            format!("{label} flag consistent with threshold {PRESENCE_THRESHOLD}"),
        ));
    }
    Ok((present, v))
}

/// Exact inverse of [`render_report`].
pub fn parse_report(text: &str) -> Result<DiagnosticReport> {
    let body = text
        .strip_suffix('\n')
        .ok_or_else(|| parse_err(text.lines().count().max(1), "report ending in a newline"))?;
    let lines: Vec<&str> = body.split('\n').collect();

    let schema = lines[0]
        .strip_prefix(SCHEMA_PREFIX)
        .ok_or_else(|| parse_err(1, format!("`{SCHEMA_PREFIX}{REPORT_SCHEMA}`")))?;
    if schema != REPORT_SCHEMA {
        return Err(Error::SchemaVersion {
            found: schema.to_string(),
            supported: REPORT_SCHEMA.to_string(),
        });
    }

    let mut report = DiagnosticReport::clean();
    for (i, label) in LINE_LABELS.iter().enumerate() {
        let line_no = i + 2;
        let line = lines
            .get(i + 1)
            .ok_or_else(|| parse_err(line_no, format!("`{label}: Yes|No (<score>)`")))?;
        let (p, s) = parse_severity_line(line_no, line, label)?;
        report.presence[i] = p;
        report.severity[i] = s;
    }

    let names = report.parameter_values().map(|(n, _)| n);
    let expected_params = || {
        let fields: Vec<String> = names.iter().map(|n| format!("{n}=<number>")).collect();
        format!("`{PARAMS_PREFIX}{}`", fields.join("; "))
    };
    let params = lines
        .get(5)
        .and_then(|l| l.strip_prefix(PARAMS_PREFIX))
        .ok_or_else(|| parse_err(6, expected_params()))?;
    let fields: Vec<&str> = params.split("; ").collect();
    if fields.len() != names.len() {
        return Err(parse_err(6, expected_params()));
    }
    for (i, (field, name)) in fields.iter().zip(names).enumerate() {
        let v = field
            .strip_prefix(name)
            .and_then(|f| f.strip_prefix('='))
            .and_then(|f| f.parse::<f64>().ok())
            .filter(|v| v.is_finite())
            .ok_or_else(|| parse_err(6, format!("`{name}=<finite number>`")))?;
        report.set_parameter(i, v);
    }

    match lines.get(6) {
        None => {}
        Some(line) => {
            let text = line
                .strip_prefix(SCENE_PREFIX)
                .ok_or_else(|| parse_err(7, format!("`{SCENE_PREFIX}<at most 30 words>` or end of report")))?;
            let d = SceneDescription::try_from(text.to_string())
                .map_err(|e| parse_err(7, format!("valid clean scene description ({e})")))?;
            report.scene_description = Some(d);
            if lines.len() > 7 {
                return Err(parse_err(8, "end of report"));
            }
        }
    }
    Ok(report)
}
