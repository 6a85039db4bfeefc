//! Cluster arithmetic for a pair of frame rates.
//!
//! Two sequences at rates `f_ref >= f_down` line up again every
//! `1 / gcd(f_ref, f_down)` seconds. That span is a *cluster*: it holds
//! `n_ref` reference frames and `n_down` downsampled frames. Padding both
//! sequences up to `lcm(f_ref, f_down)` gives `n_ref * n_down` virtual slots
//! per cluster, and the schedule below lists every distinct co-occurring
//! frame pair together with how many of those slots it covers.

use std::fmt;
use std::str::FromStr;

use num_integer::Integer;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("frame rate must be positive")]
    ZeroRate,
    #[error("invalid frame rate {0:?}")]
    InvalidRate(String),
    #[error("f_down must not exceed f_ref ({f_down} > {f_ref}); upsampling is unsupported")]
    Upsampling { f_ref: FrameRate, f_down: FrameRate },
    #[error("frame rate arithmetic overflows 64 bits")]
    Overflow,
    #[error(
        "sequence shorter than one cluster: {frames_ref} reference frames (need {n_ref}), \
         {frames_down} downsampled frames (need {n_down})"
    )]
    TooShort {
        frames_ref: u64,
        frames_down: u64,
        n_ref: u64,
        n_down: u64,
    },
}

/// An exact, positive frame rate in Hz, kept in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameRate {
    num: u64,
    den: u64,
}

impl FrameRate {
    pub fn new(num: u64, den: u64) -> Result<Self, ScheduleError> {
        if num == 0 || den == 0 {
            return Err(ScheduleError::ZeroRate);
        }
        let g = num.gcd(&den);
        Ok(Self {
            num: num / g,
            den: den / g,
        })
    }

    pub fn hz(hz: u64) -> Result<Self, ScheduleError> {
        Self::new(hz, 1)
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn den(&self) -> u64 {
        self.den
    }

    pub fn is_integer(&self) -> bool {
        self.den == 1
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    fn from_u128(num: u128, den: u128) -> Result<Self, ScheduleError> {
        let g = num.gcd(&den);
        let (num, den) = (num / g, den / g);
        let num = u64::try_from(num).map_err(|_| ScheduleError::Overflow)?;
        let den = u64::try_from(den).map_err(|_| ScheduleError::Overflow)?;
        Self::new(num, den)
    }
}

impl fmt::Display for FrameRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

/// Accepts `60`, `30000/1001`, `30000:1001` (Y4M style) and exact decimals
/// such as `29.97`, which is read as `2997/100`.
impl FromStr for FrameRate {
    type Err = ScheduleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || ScheduleError::InvalidRate(s.to_string());
        let parse = |t: &str| t.trim().parse::<u64>().map_err(|_| bad());
        if let Some((n, d)) = s.split_once(['/', ':']) {
            return Self::new(parse(n)?, parse(d)?);
        }
        if let Some((int, frac)) = s.split_once('.') {
            if frac.is_empty() || frac.len() > 9 || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            let scale = 10u64.pow(frac.len() as u32);
            let int = if int.is_empty() { 0 } else { parse(int)? };
            let num = int
                .checked_mul(scale)
                .and_then(|v| v.checked_add(frac.parse::<u64>().ok()?))
                .ok_or(ScheduleError::Overflow)?;
            return Self::new(num, scale);
        }
        Self::new(parse(s)?, 1)
    }
}

impl Serialize for FrameRate {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.is_integer() {
            serializer.serialize_u64(self.num)
        } else {
            serializer.collect_str(self)
        }
    }
}

impl<'de> Deserialize<'de> for FrameRate {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(u64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Int(hz) => FrameRate::hz(hz),
            Repr::Text(s) => s.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// A reference rate and a (lower or equal) downsampled rate with all the
/// derived cluster quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRatePair {
    pub f_ref: FrameRate,
    pub f_down: FrameRate,
    pub gcd: FrameRate,
    pub f_lcm: FrameRate,
    pub n_ref: u64,
    pub n_down: u64,
    pub n_virtual: u64,
}

impl FrameRatePair {
    /// The reduced downsampling factor `f_ref / f_down` as `(num, den)`.
    pub fn factor(&self) -> (u64, u64) {
        (self.n_ref, self.n_down)
    }

    pub fn is_integer_factor(&self) -> bool {
        self.n_down == 1
    }

    /// Number of distinct frame pairs scored per cluster.
    pub fn pairs_per_cluster(&self) -> u64 {
        self.n_ref + self.n_down - 1
    }
}

impl fmt::Display for FrameRatePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} Hz -> {} Hz (d = {}/{}, f_lcm = {} Hz)",
            self.f_ref, self.f_down, self.n_ref, self.n_down, self.f_lcm
        )
    }
}

pub fn derive_pair(f_ref: FrameRate, f_down: FrameRate) -> Result<FrameRatePair, ScheduleError> {
    // f_ref / f_down = (a/b) / (c/d) = (a*d) / (b*c)
    let ratio_num = f_ref.num as u128 * f_down.den as u128;
    let ratio_den = f_ref.den as u128 * f_down.num as u128;
    if ratio_num < ratio_den {
        return Err(ScheduleError::Upsampling { f_ref, f_down });
    }
    let k = ratio_num.gcd(&ratio_den);
    let n_ref = u64::try_from(ratio_num / k).map_err(|_| ScheduleError::Overflow)?;
    let n_down = u64::try_from(ratio_den / k).map_err(|_| ScheduleError::Overflow)?;
    let n_virtual = n_ref.checked_mul(n_down).ok_or(ScheduleError::Overflow)?;

    let gcd = FrameRate::from_u128(f_ref.num as u128, f_ref.den as u128 * n_ref as u128)?;
    let f_lcm = FrameRate::from_u128(f_ref.num as u128 * n_down as u128, f_ref.den as u128)?;

    Ok(FrameRatePair {
        f_ref,
        f_down,
        gcd,
        f_lcm,
        n_ref,
        n_down,
        n_virtual,
    })
}

/// Shorthand for integer rates.
pub fn derive_pair_hz(f_ref: u64, f_down: u64) -> Result<FrameRatePair, ScheduleError> {
    derive_pair(FrameRate::hz(f_ref)?, FrameRate::hz(f_down)?)
}

/// How many whole clusters two sequences share, and what is left over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ClusterSpan {
    pub clusters: u64,
    pub ref_leftover: u64,
    pub down_leftover: u64,
}

impl ClusterSpan {
    pub fn is_truncated(&self) -> bool {
        self.ref_leftover != 0 || self.down_leftover != 0
    }
}

pub fn cluster_count(
    pair: &FrameRatePair,
    frames_ref: u64,
    frames_down: u64,
) -> Result<ClusterSpan, ScheduleError> {
    let clusters = (frames_ref / pair.n_ref).min(frames_down / pair.n_down);
    if clusters == 0 {
        return Err(ScheduleError::TooShort {
            frames_ref,
            frames_down,
            n_ref: pair.n_ref,
            n_down: pair.n_down,
        });
    }
    let span = ClusterSpan {
        clusters,
        ref_leftover: frames_ref - clusters * pair.n_ref,
        down_leftover: frames_down - clusters * pair.n_down,
    };
    if span.is_truncated() {
        log::warn!(
            "sequences truncated to {} whole clusters ({} reference and {} downsampled frames ignored)",
            clusters,
            span.ref_leftover,
            span.down_leftover
        );
    }
    Ok(span)
}

/// One scored frame pair inside a cluster. Indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleEntry {
    pub weight: u64,
    pub ref_frame: usize,
    pub down_frame: usize,
}

/// Weights `w` and 1-based frame indices `h` (reference) and `l`
/// (downsampled) for a single cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClusterSchedule {
    #[serde(flatten)]
    pair: FrameRatePair,
    w: Vec<u64>,
    h: Vec<usize>,
    l: Vec<usize>,
}

impl ClusterSchedule {
    pub fn pair(&self) -> &FrameRatePair {
        &self.pair
    }

    pub fn weights(&self) -> &[u64] {
        &self.w
    }

    pub fn ref_indices(&self) -> &[usize] {
        &self.h
    }

    pub fn down_indices(&self) -> &[usize] {
        &self.l
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = ScheduleEntry> + '_ {
        self.w
            .iter()
            .zip(&self.h)
            .zip(&self.l)
            .map(|((&weight, &ref_frame), &down_frame)| ScheduleEntry {
                weight,
                ref_frame,
                down_frame,
            })
    }
}

pub fn generate_schedule(pair: &FrameRatePair) -> ClusterSchedule {
    let (w, h, l) = walk_cluster(pair.n_ref, pair.n_down);
    ClusterSchedule {
        pair: *pair,
        w,
        h,
        l,
    }
}

/// Walks the virtual time stamps of one cluster. Reference frame `i` ends at
/// stamp `n_down * i`, downsampled frame `j` at `n_ref * j`; whichever ends
/// first is advanced, and the gap since the previous stamp is the weight of
/// the pair that was current. On a tie (only at the cluster end) the
/// downsampled side advances.
pub(crate) fn walk_cluster(n_ref: u64, n_down: u64) -> (Vec<u64>, Vec<usize>, Vec<usize>) {
    let len = (n_ref + n_down - 1) as usize;
    let mut w = Vec::with_capacity(len);
    let mut h = Vec::with_capacity(len);
    let mut l = Vec::with_capacity(len);

    let mut last_stamp = 0u64;
    let mut last_ref = 1u64;
    let mut last_down = 1u64;
    for _ in 0..len {
        l.push(last_down as usize);
        h.push(last_ref as usize);
        let next_stamp = if n_down * last_ref < n_ref * last_down {
            let s = n_down * last_ref;
            last_ref += 1;
            s
        } else {
            let s = n_ref * last_down;
            last_down += 1;
            s
        };
        w.push(next_stamp - last_stamp);
        last_stamp = next_stamp;
    }
    (w, h, l)
}
