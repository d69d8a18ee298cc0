//! Versioned `key=value` checkpoint text.
//!
//! ```text
//! rnr-checkpoint/1
//! step=200
//! seed=7
//! group=8
//! tau=adaptive
//! learning_rate=0.02
//! steps=200
//! batch=4
//! exploration_std=0.05,0.03,0.03,0.03,0.2,0.1,0.05
//! denoise_per_sigma=25.0
//! sharpen_per_length=0.25
//! derain_per_coverage=3.0
//! offset=-0.01,0.0,0.0,0.0,0.0,0.0,0.0
//! reward_history=12.5,13.25
//! ```
//!
//! Per-step randomness is a pure function of `(seed, step)`, so those two keys
//! are the whole rng state. Floats use shortest round-trip formatting.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::restore::{PolicyConfig, PARAM_DIM};

use super::train::{TrainConfig, TrainState};
use super::TauRule;

pub const CHECKPOINT_SCHEMA: &str = "rnr-checkpoint/1";

const KEYS: [&str; 13] = [
    "step",
    "seed",
    "group",
    "tau",
    "learning_rate",
    "steps",
    "batch",
    "exploration_std",
    "denoise_per_sigma",
    "sharpen_per_length",
    "derain_per_coverage",
    "offset",
    "reward_history",
];

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

pub fn render_checkpoint(state: &TrainState) -> String {
    let c = &state.config;
    let values = [
        state.step.to_string(),
        c.seed.to_string(),
        c.group_size.to_string(),
        c.tau.to_string(),
        format!("{:?}", c.learning_rate),
        c.steps.to_string(),
        c.batch_size.to_string(),
        join(&c.policy.exploration_std),
        format!("{:?}", c.policy.denoise_per_sigma),
        format!("{:?}", c.policy.sharpen_per_length),
        format!("{:?}", c.policy.derain_per_coverage),
        join(&state.offset),
        join(&state.reward_history),
    ];
    let mut out = format!("{CHECKPOINT_SCHEMA}\n");
    for (k, v) in KEYS.iter().zip(values) {
        out.push_str(&format!("{k}={v}\n"));
    }
    out
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    /// The value of the next line, which must carry `key`.
    fn value(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let expected = || format!("`{key}=<value>`");
        let (i, line) = self.iter.next().ok_or_else(|| Error::Parse {
            line: 0,
            expected: format!("{} before end of input", expected()),
        })?;
        let line_no = i + 1;
        match line.split_once('=') {
            Some((k, v)) if k == key => Ok((line_no, v)),
            _ => Err(Error::Parse { line: line_no, expected: expected() }),
        }
    }
}

fn number<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Parse {
        line,
        expected: format!("a number for `{key}`, found `{v}`"),
    })
}

fn list(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| number(line, key, x)).collect()
}

fn vector(line: usize, key: &str, v: &str) -> Result<[f64; PARAM_DIM]> {
    let items = list(line, key, v)?;
    items.try_into().map_err(|items: Vec<f64>| Error::Parse {
        line,
        expected: format!("{PARAM_DIM} comma-separated values for `{key}`, found {}", items.len()),
    })
}

pub fn parse_checkpoint(text: &str) -> Result<TrainState> {
    let mut lines = Lines { iter: text.lines().enumerate() };
    match lines.iter.next() {
        Some((_, CHECKPOINT_SCHEMA)) => {}
        Some((_, other)) => {
            return Err(Error::SchemaVersion {
                found: other.to_string(),
                supported: CHECKPOINT_SCHEMA.to_string(),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                expected: format!("`{CHECKPOINT_SCHEMA}`"),
            })
        }
    }
    let (l, v) = lines.value("step")?;
    let step = number(l, "step", v)?;
    let (l, v) = lines.value("seed")?;
    let seed = number(l, "seed", v)?;
    let (l, v) = lines.value("group")?;
    let group_size = number(l, "group", v)?;
    let (l, v) = lines.value("tau")?;
    let tau: TauRule = v.parse().map_err(|_| Error::Parse {
        line: l,
        expected: "`adaptive` or a positive number for `tau`".into(),
    })?;
    let (l, v) = lines.value("learning_rate")?;
    let learning_rate = number(l, "learning_rate", v)?;
    let (l, v) = lines.value("steps")?;
    let steps = number(l, "steps", v)?;
    let (l, v) = lines.value("batch")?;
    let batch_size = number(l, "batch", v)?;
    let (l, v) = lines.value("exploration_std")?;
    let exploration_std = vector(l, "exploration_std", v)?;
    let (l, v) = lines.value("denoise_per_sigma")?;
    let denoise_per_sigma = number(l, "denoise_per_sigma", v)?;
    let (l, v) = lines.value("sharpen_per_length")?;
    let sharpen_per_length = number(l, "sharpen_per_length", v)?;
    let (l, v) = lines.value("derain_per_coverage")?;
    let derain_per_coverage = number(l, "derain_per_coverage", v)?;
    let (l, v) = lines.value("offset")?;
    let offset = vector(l, "offset", v)?;
    let (l, v) = lines.value("reward_history")?;
    let reward_history = list(l, "reward_history", v)?;
    if let Some((i, _)) = lines.iter.find(|(_, line)| !line.is_empty()) {
        return Err(Error::Parse {
            line: i + 1,
            expected: "end of checkpoint".into(),
        });
    }
    let state = TrainState {
        config: TrainConfig {
            group_size,
            tau,
            learning_rate,
            steps,
            seed,
            batch_size,
            policy: PolicyConfig {
                exploration_std,
                denoise_per_sigma,
                sharpen_per_length,
                derain_per_coverage,
            },
        },
        offset,
        step,
        reward_history,
    };
    state.validate()?;
    Ok(state)
}

/// Writes through a sibling temp file and a rename, so readers never see a
/// partial checkpoint.
pub fn write_checkpoint(path: impl AsRef<Path>, state: &TrainState) -> Result<()> {
    let path = path.as_ref();
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(render_checkpoint(state).as_bytes())
        .and_then(|_| f.sync_all())
        .map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<TrainState> {
    let path = path.as_ref();
    parse_checkpoint(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> TrainState {
        let mut s = TrainState::new(TrainConfig {
            seed: 7,
            tau: TauRule::Fixed(0.003),
            ..TrainConfig::default()
        })
        .unwrap();
        s.offset = [-0.0123, 0.1, 0.0, -1e-17, 0.25, 0.0, 1.0 / 3.0];
        s.step = 2;
        s.reward_history = vec![12.5, -0.1 + 0.2];
        s
    }

    #[test]
    fn round_trip_is_exact() {
        let s = state();
        assert_eq!(parse_checkpoint(&render_checkpoint(&s)).unwrap(), s);
        let fresh = TrainState::new(TrainConfig::default()).unwrap();
        assert_eq!(parse_checkpoint(&render_checkpoint(&fresh)).unwrap(), fresh);
    }

    #[test]
    fn wrong_version_names_both() {
        let text = render_checkpoint(&state()).replace(CHECKPOINT_SCHEMA, "rnr-checkpoint/9");
        match parse_checkpoint(&text) {
            Err(Error::SchemaVersion { found, supported }) => {
                assert_eq!(found, "rnr-checkpoint/9");
                assert_eq!(supported, CHECKPOINT_SCHEMA);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn errors_carry_the_line() {
        let text = render_checkpoint(&state()).replace("group=8", "group=eight");
        assert!(matches!(parse_checkpoint(&text), Err(Error::Parse { line: 4, .. })));
        let text = render_checkpoint(&state()).replace("batch=", "batches=");
        assert!(matches!(parse_checkpoint(&text), Err(Error::Parse { line: 8, .. })));
    }

    #[test]
    fn history_length_must_match_step() {
        let text = render_checkpoint(&state()).replace("step=2", "step=3");
        assert!(matches!(parse_checkpoint(&text), Err(Error::Invariant(_))));
    }

    #[test]
    fn atomic_write_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.ckpt");
        write_checkpoint(&path, &state()).unwrap();
        assert_eq!(read_checkpoint(&path).unwrap(), state());
        assert!(!dir.path().join("policy.ckpt.tmp").exists());
    }
}
