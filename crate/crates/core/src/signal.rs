//! Candidate collar-pulse extraction from the raw CCL sample stream.
//!
//! The detector keeps a rolling window of background samples and derives a
//! dynamic amplitude threshold from it: `Th± = μ ± A·sqrt(Σx²/N − μ²)`.
//! Samples strictly outside `[Th−, Th+]` open an *excursion*; a maximal run
//! of such samples (tolerating short interior gaps, so the two lobes of the
//! bimodal collar waveform merge into one event) is closed into a
//! [`CandidatePulse`], which is then width-gated to discard narrow spikes
//! and overlong interference bursts.
//!
//! Window statistics freeze while an excursion is open, so a collar pulse
//! does not inflate the very threshold that is supposed to catch it.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::float::Real;

/// Errors from the streaming detector front-end.
#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    /// Sample amplitude was NaN or infinite.
    #[error("non-finite amplitude at sample index {index}")]
    NonFiniteAmplitude { index: u64 },
    /// Sample timestamp was NaN, infinite or negative.
    #[error("non-finite or negative time at sample index {index}")]
    InvalidTime { index: u64 },
    /// Timestamps must be monotone non-decreasing.
    #[error("time went backwards at sample index {index}")]
    NonMonotonicTime { index: u64 },
    /// Thresholds need at least two samples in the window.
    #[error("window holds {count} samples, need at least 2")]
    InsufficientData { count: usize },
}

/// One time-stamped CCL amplitude sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample<R> {
    /// Seconds since stream start.
    pub t: R,
    /// Amplitude in dimensionless normalized units.
    pub x: R,
}

impl<R: Real> Sample<R> {
    pub fn new(t: R, x: R) -> Self {
        Self { t, x }
    }

    /// Ingestion check: both fields finite, time non-negative.
    pub fn validate(&self, index: u64) -> Result<(), SignalError> {
        if !self.x.is_finite() {
            return Err(SignalError::NonFiniteAmplitude { index });
        }
        if !self.t.is_finite() || self.t < R::zero() {
            return Err(SignalError::InvalidTime { index });
        }
        Ok(())
    }
}

/// Fixed-capacity window with O(1) running sum and sum of squares.
///
/// Sums are rebuilt from the buffer once every `capacity` pushes, which
/// bounds floating-point drift without changing the amortized cost.
#[derive(Debug, Clone)]
pub struct RollingWindow<R> {
    capacity: usize,
    buf: VecDeque<R>,
    sum: R,
    sum_sq: R,
    pushes_since_rebuild: usize,
}

impl<R: Real> RollingWindow<R> {
    /// `capacity` is the recognition-window width N.
    ///
    /// # Panics
    /// Panics if `capacity < 2`; thresholds are undefined below that.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 2, "window capacity must be at least 2");
        Self {
            capacity,
            buf: VecDeque::with_capacity(capacity),
            sum: R::zero(),
            sum_sq: R::zero(),
            pushes_since_rebuild: 0,
        }
    }

    /// Accept one sample, evicting the oldest when at capacity.
    pub fn push(&mut self, x: R) {
        if self.buf.len() == self.capacity {
            let old = self.buf.pop_front().expect("non-empty at capacity");
            self.sum = self.sum - old;
            self.sum_sq = self.sum_sq - old * old;
        }
        self.buf.push_back(x);
        self.sum = self.sum + x;
        self.sum_sq = self.sum_sq + x * x;
        self.pushes_since_rebuild += 1;
        if self.pushes_since_rebuild >= self.capacity {
            self.rebuild_sums();
        }
    }

    fn rebuild_sums(&mut self) {
        let mut sum = R::zero();
        let mut sum_sq = R::zero();
        for &v in &self.buf {
            sum = sum + v;
            sum_sq = sum_sq + v * v;
        }
        self.sum = sum;
        self.sum_sq = sum_sq;
        self.pushes_since_rebuild = 0;
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_full(&self) -> bool {
        self.buf.len() == self.capacity
    }

    pub fn sum(&self) -> R {
        self.sum
    }

    pub fn sum_sq(&self) -> R {
        self.sum_sq
    }

    /// Current window contents, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = R> + '_ {
        self.buf.iter().copied()
    }

    pub fn mean(&self) -> Option<R> {
        if self.buf.is_empty() {
            None
        } else {
            Some(self.sum / R::from_usize_lossy(self.buf.len()))
        }
    }

    /// Dynamic thresholds `Th± = μ ± A·σ` over the held samples, with
    /// `σ = sqrt(max(0, Σx²/n − μ²))`.
    pub fn thresholds(&self, coefficient_a: R) -> Result<ThresholdPair<R>, SignalError> {
        let count = self.buf.len();
        if count < 2 {
            return Err(SignalError::InsufficientData { count });
        }
        let n = R::from_usize_lossy(count);
        let mu = self.sum / n;
        let variance = (self.sum_sq / n - mu * mu).max(R::zero());
        let sigma = variance.sqrt();
        let band = coefficient_a * sigma;
        Ok(ThresholdPair {
            mu,
            sigma,
            upper: mu + band,
            lower: mu - band,
        })
    }
}

/// Upper/lower threshold pair in force at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPair<R> {
    /// Window mean μ.
    pub mu: R,
    /// The 2-norm deviation term σ (clamped at 0).
    pub sigma: R,
    /// μ + A·σ
    pub upper: R,
    /// μ − A·σ
    pub lower: R,
}

/// Where a sample falls relative to the thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    Inside,
    AboveUpper,
    BelowLower,
}

impl<R: Real> ThresholdPair<R> {
    /// Exceedance is strict: a sample exactly on a threshold is inside,
    /// so constant signals never trigger.
    pub fn classify(&self, x: R) -> Region {
        if x > self.upper {
            Region::AboveUpper
        } else if x < self.lower {
            Region::BelowLower
        } else {
            Region::Inside
        }
    }
}

/// Which side(s) of the threshold band an excursion visited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    AboveUpper,
    BelowLower,
    Mixed,
}

/// One contiguous threshold excursion, closed and measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidatePulse<R> {
    /// Time of the first exceeding sample.
    pub t_start: R,
    /// Time of the last exceeding sample.
    pub t_end: R,
    /// Midpoint `(t_start + t_end) / 2`; stands in for the collar position.
    pub t_center: R,
    pub polarity: Polarity,
    /// Most extreme sample value (signed), measured against the entry mean.
    pub peak_amplitude: R,
    /// Samples from first to last exceeding sample inclusive, bridged gaps
    /// counted.
    pub width_samples: usize,
    /// `t_end − t_start`.
    pub width_seconds: R,
}

#[derive(Debug, Clone)]
struct OpenExcursion<R> {
    t_start: R,
    t_last_exceeding: R,
    /// Thresholds in force when the excursion began.
    entry: ThresholdPair<R>,
    peak: R,
    peak_deviation: R,
    saw_above: bool,
    saw_below: bool,
    /// Samples observed since the first exceeding one, inclusive.
    samples_seen: usize,
    /// `samples_seen` at the last exceeding sample.
    width_at_last_exceeding: usize,
    /// Current run of consecutive inside samples.
    gap_run: usize,
}

impl<R: Real> OpenExcursion<R> {
    fn close(&self) -> CandidatePulse<R> {
        let polarity = match (self.saw_above, self.saw_below) {
            (true, true) => Polarity::Mixed,
            (true, false) => Polarity::AboveUpper,
            _ => Polarity::BelowLower,
        };
        let two = R::from_f64_lossy(2.0);
        CandidatePulse {
            t_start: self.t_start,
            t_end: self.t_last_exceeding,
            t_center: (self.t_start + self.t_last_exceeding) / two,
            polarity,
            peak_amplitude: self.peak,
            width_samples: self.width_at_last_exceeding,
            width_seconds: self.t_last_exceeding - self.t_start,
        }
    }
}

/// Tracks the current excursion; emits a pulse when one closes.
///
/// Up to `gap_tolerance` consecutive inside samples are bridged without
/// closing, which is what fuses the two opposite-signed lobes of a collar
/// waveform into a single pulse.
#[derive(Debug, Clone)]
pub struct ExcursionTracker<R> {
    gap_tolerance: usize,
    open: Option<OpenExcursion<R>>,
}

impl<R: Real> ExcursionTracker<R> {
    pub fn new(gap_tolerance: usize) -> Self {
        Self {
            gap_tolerance,
            open: None,
        }
    }

    pub fn is_open(&self) -> bool {
        self.open.is_some()
    }

    /// Feed one classified sample. `thresholds` are the pair in force for
    /// this sample; they are snapshotted when an excursion opens.
    pub fn update(
        &mut self,
        sample: &Sample<R>,
        region: Region,
        thresholds: &ThresholdPair<R>,
    ) -> Option<CandidatePulse<R>> {
        match (region, self.open.as_mut()) {
            (Region::Inside, None) => None,
            (Region::Inside, Some(exc)) => {
                exc.samples_seen += 1;
                exc.gap_run += 1;
                if exc.gap_run > self.gap_tolerance {
                    let pulse = exc.close();
                    self.open = None;
                    Some(pulse)
                } else {
                    None
                }
            }
            (_, Some(exc)) => {
                exc.samples_seen += 1;
                exc.gap_run = 0;
                exc.t_last_exceeding = sample.t;
                exc.width_at_last_exceeding = exc.samples_seen;
                let dev = (sample.x - exc.entry.mu).abs();
                if dev > exc.peak_deviation {
                    exc.peak_deviation = dev;
                    exc.peak = sample.x;
                }
                match region {
                    Region::AboveUpper => exc.saw_above = true,
                    Region::BelowLower => exc.saw_below = true,
                    Region::Inside => unreachable!(),
                }
                None
            }
            (_, None) => {
                self.open = Some(OpenExcursion {
                    t_start: sample.t,
                    t_last_exceeding: sample.t,
                    entry: *thresholds,
                    peak: sample.x,
                    peak_deviation: (sample.x - thresholds.mu).abs(),
                    saw_above: region == Region::AboveUpper,
                    saw_below: region == Region::BelowLower,
                    samples_seen: 1,
                    width_at_last_exceeding: 1,
                    gap_run: 0,
                });
                None
            }
        }
    }

    /// Flush a still-open excursion at end of stream.
    pub fn finalize(&mut self) -> Option<CandidatePulse<R>> {
        self.open.take().map(|exc| exc.close())
    }
}

/// Width-gate outcome for a candidate pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateVerdict {
    Accept,
    /// Narrower than `min_width`: interference spike.
    RejectSpike,
    /// Wider than `max_width`: saturation or a continuous-spike burst.
    RejectOverlong,
}

/// Accept iff `min_width <= width_samples <= max_width`.
pub fn gate_pulse<R: Real>(
    pulse: &CandidatePulse<R>,
    min_width: usize,
    max_width: usize,
) -> GateVerdict {
    debug_assert!(min_width >= 1 && max_width > min_width);
    if pulse.width_samples < min_width {
        GateVerdict::RejectSpike
    } else if pulse.width_samples > max_width {
        GateVerdict::RejectOverlong
    } else {
        GateVerdict::Accept
    }
}

/// Detector tuning. Defaults assume 1 kHz sampling at ~2.22 m/s descent,
/// where a collar excursion spans on the order of 50–200 samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig<R> {
    /// Recognition-window width N. Default 4096 ≈ one casing-joint length
    /// of samples at nominal speed, keeping collar excursions statistically
    /// rare within the window.
    pub window_len: usize,
    /// Threshold coefficient A. Default 3.0: collar samples sit largely
    /// outside three standard deviations of the background mean.
    pub coefficient_a: R,
    /// Narrowest acceptable pulse, in samples.
    pub min_width_samples: usize,
    /// Widest acceptable pulse, in samples.
    pub max_width_samples: usize,
    /// Interior gap bridged without closing an excursion. Default 25% of
    /// `min_width_samples`, enough to merge the two collar lobes.
    pub gap_tolerance_samples: usize,
}

impl<R: Real> Default for DetectorConfig<R> {
    fn default() -> Self {
        Self {
            window_len: 4096,
            coefficient_a: R::from_f64_lossy(3.0),
            min_width_samples: 40,
            max_width_samples: 600,
            gap_tolerance_samples: 10,
        }
    }
}

/// A pulse together with its gate verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatedPulse<R> {
    pub pulse: CandidatePulse<R>,
    pub verdict: GateVerdict,
}

/// Streaming detector: rolling statistics, classification, excursion
/// tracking and width gating in one pass.
///
/// No pulses are emitted until the window has filled once (warm-up).
/// While an excursion is open the window is not updated, so the threshold
/// stays a background-noise statistic.
#[derive(Debug, Clone)]
pub struct CollarDetector<R> {
    config: DetectorConfig<R>,
    window: RollingWindow<R>,
    excursion: ExcursionTracker<R>,
    warmed_up: bool,
    samples_ingested: u64,
    last_t: Option<R>,
}

impl<R: Real> CollarDetector<R> {
    pub fn new(config: DetectorConfig<R>) -> Self {
        let window = RollingWindow::new(config.window_len);
        let excursion = ExcursionTracker::new(config.gap_tolerance_samples);
        Self {
            config,
            window,
            excursion,
            warmed_up: false,
            samples_ingested: 0,
            last_t: None,
        }
    }

    pub fn config(&self) -> &DetectorConfig<R> {
        &self.config
    }

    /// Number of samples accepted so far.
    pub fn samples_ingested(&self) -> u64 {
        self.samples_ingested
    }

    /// Thresholds currently in force, once warm.
    pub fn current_thresholds(&self) -> Option<ThresholdPair<R>> {
        if self.warmed_up {
            self.window.thresholds(self.config.coefficient_a).ok()
        } else {
            None
        }
    }

    pub fn window(&self) -> &RollingWindow<R> {
        &self.window
    }

    pub fn is_warmed_up(&self) -> bool {
        self.warmed_up
    }

    /// Ingest one sample. At most one pulse can close per sample.
    pub fn push(&mut self, sample: Sample<R>) -> Result<Option<GatedPulse<R>>, SignalError> {
        let index = self.samples_ingested;
        sample.validate(index)?;
        if let Some(last) = self.last_t {
            if sample.t < last {
                return Err(SignalError::NonMonotonicTime { index });
            }
        }
        self.last_t = Some(sample.t);
        self.samples_ingested += 1;

        if !self.warmed_up {
            self.window.push(sample.x);
            if self.window.is_full() {
                self.warmed_up = true;
            }
            return Ok(None);
        }

        let thresholds = self
            .window
            .thresholds(self.config.coefficient_a)
            .expect("warm window has enough samples");
        let region = thresholds.classify(sample.x);
        let closed = self.excursion.update(&sample, region, &thresholds);

        // Statistics accumulate only from background: the sample must be
        // inside the band and not part of a still-open excursion.
        if region == Region::Inside && !self.excursion.is_open() {
            self.window.push(sample.x);
        }

        Ok(closed.map(|pulse| self.gate(pulse)))
    }

    /// Flush the open excursion, if any, at end of stream.
    pub fn finalize(&mut self) -> Option<GatedPulse<R>> {
        self.excursion.finalize().map(|pulse| self.gate(pulse))
    }

    fn gate(&self, pulse: CandidatePulse<R>) -> GatedPulse<R> {
        let verdict = gate_pulse(
            &pulse,
            self.config.min_width_samples,
            self.config.max_width_samples,
        );
        GatedPulse { pulse, verdict }
    }
}
