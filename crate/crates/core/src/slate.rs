//! Slates, contexts and logged bandit data.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest slate space that [`enumerate_slates`] will walk.
pub const ENUMERATION_LIMIT: u64 = 10_000_000;

/// Shape of the combinatorial action space: `num_slots` positions, each
/// filled with one of `actions_per_slot` candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlateConfig {
    pub num_slots: usize,
    pub actions_per_slot: usize,
}

impl SlateConfig {
    pub fn new(num_slots: usize, actions_per_slot: usize) -> Result<Self> {
        if num_slots == 0 || actions_per_slot == 0 {
            return Err(Error::InvalidConfig(format!(
                "need K >= 1 and N >= 1, got K = {num_slots}, N = {actions_per_slot}"
            )));
        }
        Ok(Self {
            num_slots,
            actions_per_slot,
        })
    }

    /// N^K, or `None` on overflow.
    pub fn slate_count(&self) -> Option<u64> {
        (self.actions_per_slot as u64).checked_pow(u32::try_from(self.num_slots).ok()?)
    }

    /// Fails unless N^K is within [`ENUMERATION_LIMIT`].
    pub fn check_enumerable(&self) -> Result<u64> {
        match self.slate_count() {
            Some(n) if n <= ENUMERATION_LIMIT => Ok(n),
            _ => Err(Error::EnumerationTooLarge {
                size: (self.actions_per_slot as f64).powi(self.num_slots as i32),
                limit: ENUMERATION_LIMIT,
            }),
        }
    }

    /// Checks that `actions` is a slate for this configuration.
    pub fn validate(&self, actions: &[usize]) -> Result<()> {
        if actions.len() != self.num_slots {
            return Err(Error::SlotCountMismatch {
                expected: self.num_slots,
                got: actions.len(),
            });
        }
        for (slot, &action) in actions.iter().enumerate() {
            if action >= self.actions_per_slot {
                return Err(Error::ActionOutOfRange {
                    slot,
                    action,
                    num_actions: self.actions_per_slot,
                });
            }
        }
        Ok(())
    }
}

/// One action index per slot. Repeats across slots are allowed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Slate(pub Vec<usize>);

impl Slate {
    pub fn new(actions: Vec<usize>) -> Self {
        Slate(actions)
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Deref for Slate {
    type Target = [usize];
    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for Slate {
    fn from(v: Vec<usize>) -> Self {
        Slate(v)
    }
}

/// Index into an environment's context table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContextId(pub usize);

/// Closed interval of admissible rewards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardRange {
    pub min: f64,
    pub max: f64,
}

impl RewardRange {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(Error::InvalidArgument(format!(
                "reward range [{min}, {max}] must be finite with min < max"
            )));
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, reward: f64) -> bool {
        reward >= self.min && reward <= self.max
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }
}

/// One logged `(context, slate, reward)` tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub context: ContextId,
    pub slate: Slate,
    pub reward: f64,
}

/// Borrowed view of a dataset row.
#[derive(Debug, Clone, Copy)]
pub struct EntryRef<'a> {
    pub context: ContextId,
    pub slate: &'a [usize],
    pub reward: f64,
}

/// Logged data, stored column-wise. Rows can be appended but never modified.
#[derive(Debug, Clone, PartialEq)]
pub struct LogDataset {
    config: SlateConfig,
    reward_range: RewardRange,
    contexts: Vec<ContextId>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
}

impl LogDataset {
    pub fn new(config: SlateConfig, reward_range: RewardRange) -> Self {
        Self {
            config,
            reward_range,
            contexts: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
        }
    }

    pub fn with_capacity(config: SlateConfig, reward_range: RewardRange, n: usize) -> Self {
        let mut data = Self::new(config, reward_range);
        data.contexts.reserve(n);
        data.actions.reserve(n * config.num_slots);
        data.rewards.reserve(n);
        data
    }

    pub fn config(&self) -> SlateConfig {
        self.config
    }

    pub fn reward_range(&self) -> RewardRange {
        self.reward_range
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn contexts(&self) -> &[ContextId] {
        &self.contexts
    }

    pub fn slate(&self, i: usize) -> &[usize] {
        let k = self.config.num_slots;
        &self.actions[i * k..(i + 1) * k]
    }

    pub fn entry(&self, i: usize) -> EntryRef<'_> {
        EntryRef {
            context: self.contexts[i],
            slate: self.slate(i),
            reward: self.rewards[i],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = EntryRef<'_>> + '_ {
        (0..self.len()).map(move |i| self.entry(i))
    }

    /// Appends a row after validating it against the configuration and reward range.
    pub fn push(&mut self, context: ContextId, slate: &[usize], reward: f64) -> Result<()> {
        self.config.validate(slate)?;
        if !self.reward_range.contains(reward) {
            return Err(Error::RewardOutOfRange {
                reward,
                min: self.reward_range.min,
                max: self.reward_range.max,
            });
        }
        self.contexts.push(context);
        self.actions.extend_from_slice(slate);
        self.rewards.push(reward);
        Ok(())
    }

    pub fn push_entry(&mut self, entry: &LogEntry) -> Result<()> {
        self.push(entry.context, &entry.slate, entry.reward)
    }

    /// Writes the dataset as CSV: one `# K=.. N=.. r_min=.. r_max=..` header line,
    /// then `context_id,a_1,..,a_K,reward` rows. Reals carry 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# K={} N={} r_min={} r_max={}",
            self.config.num_slots,
            self.config.actions_per_slot,
            fmt_real(self.reward_range.min),
            fmt_real(self.reward_range.max)
        )?;
        let mut line = String::new();
        for entry in self.iter() {
            line.clear();
            write!(line, "{}", entry.context.0).unwrap();
            for a in entry.slate {
                write!(line, ",{a}").unwrap();
            }
            write!(line, ",{}", fmt_real(entry.reward)).unwrap();
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "missing header".into(),
        })??;
        let (config, range) = parse_header(&header)?;
        let mut data = LogDataset::new(config, range);
        let mut slate = Vec::with_capacity(config.num_slots);
        for (idx, line) in lines.enumerate() {
            let line = line?;
            let lineno = idx + 2;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != config.num_slots + 2 {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!(
                        "expected {} fields, found {}",
                        config.num_slots + 2,
                        fields.len()
                    ),
                });
            }
            let bad = |what: &str| Error::Parse {
                line: lineno,
                message: format!("invalid {what}"),
            };
            let context: usize = fields[0].parse().map_err(|_| bad("context id"))?;
            slate.clear();
            for f in &fields[1..=config.num_slots] {
                slate.push(f.parse().map_err(|_| bad("action"))?);
            }
            let reward: f64 = fields[config.num_slots + 1]
                .parse()
                .map_err(|_| bad("reward"))?;
            data.push(ContextId(context), &slate, reward)
                .map_err(|e| Error::Parse {
                    line: lineno,
                    message: e.to_string(),
                })?;
        }
        Ok(data)
    }
}

/// Decimal form with 17 significant digits; parses back to the same bits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_header(header: &str) -> Result<(SlateConfig, RewardRange)> {
    let err = |message: String| Error::Parse { line: 1, message };
    let body = header
        .strip_prefix('#')
        .ok_or_else(|| err("header must start with '#'".into()))?;
    let (mut k, mut n, mut lo, mut hi) = (None, None, None, None);
    for token in body.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| err(format!("malformed header token '{token}'")))?;
        let bad = || err(format!("invalid value for {key}"));
        match key {
            "K" => k = Some(value.parse::<usize>().map_err(|_| bad())?),
            "N" => n = Some(value.parse::<usize>().map_err(|_| bad())?),
            "r_min" => lo = Some(value.parse::<f64>().map_err(|_| bad())?),
            "r_max" => hi = Some(value.parse::<f64>().map_err(|_| bad())?),
            _ => return Err(err(format!("unknown header key '{key}'"))),
        }
    }
    match (k, n, lo, hi) {
        (Some(k), Some(n), Some(lo), Some(hi)) => {
            Ok((SlateConfig::new(k, n)?, RewardRange::new(lo, hi)?))
        }
        _ => Err(err("header must declare K, N, r_min and r_max".into())),
    }
}

/// All N^K slates in lexicographic order. Refuses spaces larger than
/// [`ENUMERATION_LIMIT`].
pub fn enumerate_slates(config: SlateConfig) -> Result<SlateIter> {
    let total = config.check_enumerable()?;
    Ok(SlateIter {
        config,
        next: Some(vec![0; config.num_slots]),
        remaining: total,
    })
}

/// Odometer over the slate space; see [`enumerate_slates`].
#[derive(Debug, Clone)]
pub struct SlateIter {
    config: SlateConfig,
    next: Option<Vec<usize>>,
    remaining: u64,
}

impl Iterator for SlateIter {
    type Item = Slate;

    fn next(&mut self) -> Option<Slate> {
        let current = self.next.take()?;
        self.remaining -= 1;
        let mut succ = current.clone();
        let mut slot = self.config.num_slots;
        let mut carried = true;
        while carried && slot > 0 {
            slot -= 1;
            succ[slot] += 1;
            if succ[slot] == self.config.actions_per_slot {
                succ[slot] = 0;
            } else {
                carried = false;
            }
        }
        if !carried {
            self.next = Some(succ);
        }
        Some(Slate(current))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let r = self.remaining as usize;
        (r, Some(r))
    }
}

impl ExactSizeIterator for SlateIter {}
