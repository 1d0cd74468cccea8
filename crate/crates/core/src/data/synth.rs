//! Synthetic scan generation, desk-scale stand-in for the physical dataset.
//!
//! Defect classes emit a Gaussian-windowed pulse pair whose amplitude and
//! I/Q phase grow monotonically with depth (the two lobes mimic the probe's
//! twin coils crossing a slot). Lift-off taps are single sharper pulses,
//! noticeably larger in magnitude and rotated in phase relative to any
//! defect. Normal segments are noise.

use serde::{Deserialize, Serialize};

use super::{Dataset, Label, ScanSegment, SegmentMeta};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Labels to emit; defaults to the canonical 20.
    pub classes: Vec<Label>,
    pub volunteers: usize,
    pub angles: usize,
    pub directions: usize,
    pub repeats: usize,
    /// Temporal length of each segment.
    pub length: usize,
    /// Standard deviation of additive white noise.
    pub noise_level: f64,
    /// Relative per-sample amplitude jitter.
    pub amplitude_jitter: f64,
    /// Pulse-centre jitter as a fraction of the length.
    pub position_jitter: f64,
    /// Per-volunteer gain spread (volunteer "handedness").
    pub volunteer_spread: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: Label::canonical_set(),
            volunteers: 4,
            angles: 8,
            directions: 2,
            repeats: 5,
            length: 250,
            noise_level: 0.05,
            amplitude_jitter: 0.08,
            position_jitter: 0.04,
            volunteer_spread: 0.04,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::invalid("synthesis needs at least one class"));
        }
        if self.volunteers == 0 || self.angles == 0 || self.directions == 0 || self.repeats == 0 {
            return Err(Error::invalid("all metadata extents must be >= 1"));
        }
        if self.length < 8 {
            return Err(Error::invalid("segments shorter than 8 samples are not useful"));
        }
        if self.noise_level < 0.0 || self.amplitude_jitter < 0.0 || self.position_jitter < 0.0 {
            return Err(Error::invalid("noise and jitter levels must be >= 0"));
        }
        Ok(())
    }

    pub fn samples_per_class(&self) -> usize {
        self.volunteers * self.angles * self.directions * self.repeats
    }
}

fn depth_fraction(label: Label) -> f64 {
    // 0.3 mm -> 0, 2.0 mm -> 1
    (label.depth_mm().unwrap_or(0.0) - 0.3) / 1.7
}

/// Deterministic generation: a fixed loop order over (volunteer, angle,
/// direction, repeat, class) draws from `rng`, so equal seeds give equal
/// datasets.
pub fn synth_generate(cfg: &SynthConfig, rng: &mut Rng) -> Result<Dataset> {
    cfg.validate()?;
    let t = cfg.length;
    let tf = t as f64;
    let mut segments = Vec::with_capacity(cfg.samples_per_class() * cfg.classes.len());

    for v in 0..cfg.volunteers {
        // volunteers differ by a small constant gain
        let centered = if cfg.volunteers > 1 {
            v as f64 / (cfg.volunteers - 1) as f64 - 0.5
        } else {
            0.0
        };
        let vol_gain = 1.0 + cfg.volunteer_spread * 2.0 * centered;
        for a in 0..cfg.angles {
            for d in 0..cfg.directions {
                for rep in 0..cfg.repeats {
                    for &label in &cfg.classes {
                        let mut samples = vec![0.0f32; t * 2];
                        match label {
                            Label::Normal => {}
                            Label::LiftOff => {
                                // single sharp tap, large and phase-rotated
                                let amp = 6.0
                                    * vol_gain
                                    * (1.0 + cfg.amplitude_jitter * rng.uniform_range(-1.0, 1.0));
                                let phase = 2.2 + 0.1 * rng.uniform_range(-1.0, 1.0);
                                let center = tf * (0.35 + 0.3 * rng.uniform());
                                let width = 0.015 * tf;
                                add_pulse(&mut samples, t, amp, phase, center, width);
                            }
                            Label::Defect { .. } => {
                                let frac = depth_fraction(label);
                                let amp = (0.6 + 1.8 * frac)
                                    * vol_gain
                                    * (1.0 + cfg.amplitude_jitter * rng.uniform_range(-1.0, 1.0));
                                let phase = 0.25 + 1.15 * frac;
                                let center = tf
                                    * (0.5 + cfg.position_jitter * rng.uniform_range(-1.0, 1.0));
                                let sep = 0.08 * tf;
                                let width = 0.03 * tf;
                                add_pulse(&mut samples, t, amp, phase, center - sep, width);
                                add_pulse(&mut samples, t, amp, phase, center + sep, width);
                            }
                        }
                        if cfg.noise_level > 0.0 {
                            for s in samples.iter_mut() {
                                *s += (cfg.noise_level * rng.normal()) as f32;
                            }
                        }
                        segments.push(ScanSegment {
                            samples,
                            label,
                            meta: SegmentMeta {
                                volunteer: v as u16,
                                angle: a as u8,
                                direction: d as u8,
                                repeat: rep as u8,
                            },
                        });
                    }
                }
            }
        }
    }
    Ok(Dataset::new(segments, cfg.classes.clone()))
}

fn add_pulse(samples: &mut [f32], t: usize, amp: f64, phase: f64, center: f64, width: f64) {
    let (i_gain, q_gain) = (amp * phase.cos(), amp * phase.sin());
    for ti in 0..t {
        let d = (ti as f64 - center) / width;
        let g = (-0.5 * d * d).exp();
        samples[ti * 2] += (i_gain * g) as f32;
        samples[ti * 2 + 1] += (q_gain * g) as f32;
    }
}
