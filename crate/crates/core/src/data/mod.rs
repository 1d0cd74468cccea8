//! Scan segments, datasets, splits, normalization, and augmentation.

mod container;
mod export;
mod synth;

pub use container::{load_container, save_container, CONTAINER_MAGIC};
pub use export::{export_complex_plane, write_complex_plane};
pub use synth::{synth_generate, SynthConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Segment label. Defect depths live on a 0.1 mm grid and are stored in
/// tenths of a millimetre so the 20-way taxonomy is exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Normal,
    LiftOff,
    Defect { tenths_mm: u8 },
}

impl Label {
    pub fn defect(tenths_mm: u8) -> Result<Label> {
        if !(3..=20).contains(&tenths_mm) {
            return Err(Error::data(format!(
                "defect depth {}.{} mm outside the 0.3-2.0 mm grid",
                tenths_mm / 10,
                tenths_mm % 10
            )));
        }
        Ok(Label::Defect { tenths_mm })
    }

    pub fn depth_mm(&self) -> Option<f64> {
        match self {
            Label::Defect { tenths_mm } => Some(*tenths_mm as f64 / 10.0),
            _ => None,
        }
    }

    /// Position in the fixed class ordering: Normal, LiftOff, then defect
    /// depths 0.3 mm through 2.0 mm.
    pub fn canonical_index(&self) -> usize {
        match self {
            Label::Normal => 0,
            Label::LiftOff => 1,
            Label::Defect { tenths_mm } => 2 + (*tenths_mm as usize - 3),
        }
    }

    pub fn from_canonical_index(i: usize) -> Result<Label> {
        match i {
            0 => Ok(Label::Normal),
            1 => Ok(Label::LiftOff),
            2..=19 => Label::defect((i - 2 + 3) as u8),
            _ => Err(Error::data(format!("class index {} outside [0,20)", i))),
        }
    }

    /// All twenty labels in canonical order.
    pub fn canonical_set() -> Vec<Label> {
        (0..20).map(|i| Label::from_canonical_index(i).unwrap()).collect()
    }

    pub fn display_name(&self) -> String {
        match self {
            Label::Normal => "normal".into(),
            Label::LiftOff => "lift-off".into(),
            Label::Defect { tenths_mm } => {
                format!("defect-{}.{}mm", tenths_mm / 10, tenths_mm % 10)
            }
        }
    }
}

/// Provenance of one scan segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentMeta {
    pub volunteer: u16,
    pub angle: u8,
    pub direction: u8,
    pub repeat: u8,
}

/// A 2-channel time series: in-phase and quadrature, interleaved row-major
/// as `(T, 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanSegment {
    pub samples: Vec<f32>,
    pub label: Label,
    pub meta: SegmentMeta,
}

impl ScanSegment {
    /// Temporal length `T`.
    pub fn len(&self) -> usize {
        self.samples.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn channel(&self, t: usize, ch: usize) -> f32 {
        self.samples[t * 2 + ch]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Validation,
    Test,
    Unsplit,
}

/// A collection of segments with a split annotation and the label set that
/// defines class indices for the network head.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub segments: Vec<ScanSegment>,
    pub split_tag: SplitTag,
    /// Class-index to label mapping, in canonical order.
    pub classes: Vec<Label>,
}

impl Dataset {
    pub fn new(segments: Vec<ScanSegment>, classes: Vec<Label>) -> Dataset {
        Dataset { segments, split_tag: SplitTag::Unsplit, classes }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_index(&self, label: Label) -> Result<usize> {
        self.classes
            .iter()
            .position(|&l| l == label)
            .ok_or_else(|| Error::data(format!("label {:?} not in this dataset's class set", label)))
    }

    /// Per-class segment counts, by class index.
    pub fn class_histogram(&self) -> Result<Vec<usize>> {
        let mut hist = vec![0usize; self.classes.len()];
        for seg in &self.segments {
            hist[self.class_index(seg.label)?] += 1;
        }
        Ok(hist)
    }

    /// Common temporal length of all segments.
    pub fn uniform_len(&self) -> Result<usize> {
        let mut lens = self.segments.iter().map(|s| s.len());
        let first = lens.next().ok_or_else(|| Error::data("empty dataset"))?;
        if lens.any(|l| l != first) {
            return Err(Error::data("segments have differing lengths"));
        }
        Ok(first)
    }

    pub fn volunteer_ids(&self) -> Vec<u16> {
        let mut ids: Vec<u16> = self.segments.iter().map(|s| s.meta.volunteer).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    fn with_tag(&self, segments: Vec<ScanSegment>, tag: SplitTag) -> Dataset {
        Dataset { segments, split_tag: tag, classes: self.classes.clone() }
    }
}

/// Per-channel normalization statistics, computed in double precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mu: [f64; 2],
    pub sigma: [f64; 2],
}

/// Keep every `factor`-th sample starting at index 0. With `prefilter` a
/// boxcar average of width `factor` runs first (off by default upstream:
/// plain subsampling).
pub fn decimate(ds: &Dataset, factor: usize, prefilter: bool) -> Result<Dataset> {
    if factor == 0 {
        return Err(Error::invalid("decimation factor must be >= 1"));
    }
    let segments = ds
        .segments
        .iter()
        .map(|seg| {
            let t = seg.len();
            if t % factor != 0 {
                return Err(Error::data(format!(
                    "length {} not divisible by decimation factor {}",
                    t, factor
                )));
            }
            let src: Vec<f32> = if prefilter && factor > 1 {
                boxcar(&seg.samples, t, factor)
            } else {
                seg.samples.clone()
            };
            let mut out = Vec::with_capacity(t / factor * 2);
            for i in (0..t).step_by(factor) {
                out.push(src[i * 2]);
                out.push(src[i * 2 + 1]);
            }
            Ok(ScanSegment { samples: out, label: seg.label, meta: seg.meta })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ds.with_tag(segments, ds.split_tag))
}

fn boxcar(samples: &[f32], t: usize, width: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; samples.len()];
    for ch in 0..2 {
        for i in 0..t {
            let lo = i.saturating_sub(width / 2);
            let hi = (i + width.div_ceil(2)).min(t);
            let sum: f64 = (lo..hi).map(|j| samples[j * 2 + ch] as f64).sum();
            out[i * 2 + ch] = (sum / (hi - lo) as f64) as f32;
        }
    }
    out
}

/// Partition by volunteer id. The id sets must be disjoint; every volunteer
/// not named lands in the training split.
pub fn split_by_volunteer(
    ds: &Dataset,
    test_ids: &[u16],
    val_ids: &[u16],
) -> Result<(Dataset, Dataset, Dataset)> {
    if test_ids.iter().any(|id| val_ids.contains(id)) {
        return Err(Error::data(format!(
            "test volunteers {:?} and validation volunteers {:?} overlap",
            test_ids, val_ids
        )));
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for seg in &ds.segments {
        let v = seg.meta.volunteer;
        if test_ids.contains(&v) {
            test.push(seg.clone());
        } else if val_ids.contains(&v) {
            val.push(seg.clone());
        } else {
            train.push(seg.clone());
        }
    }
    Ok((
        ds.with_tag(train, SplitTag::Train),
        ds.with_tag(val, SplitTag::Validation),
        ds.with_tag(test, SplitTag::Test),
    ))
}

/// Seeded choice of disjoint test/validation volunteer id sets.
pub fn pick_split_ids(ds: &Dataset, n_test: usize, n_val: usize, rng: &mut Rng) -> Result<(Vec<u16>, Vec<u16>)> {
    let ids = ds.volunteer_ids();
    if n_test + n_val > ids.len() {
        return Err(Error::data(format!(
            "cannot draw {}+{} volunteers from {}",
            n_test,
            n_val,
            ids.len()
        )));
    }
    let chosen = rng.choose_distinct(ids.len(), n_test + n_val);
    let test: Vec<u16> = chosen[..n_test].iter().map(|&i| ids[i]).collect();
    let val: Vec<u16> = chosen[n_test..].iter().map(|&i| ids[i]).collect();
    Ok((test, val))
}

/// Per-channel mean and population standard deviation over every sample and
/// time step of the training data.
pub fn compute_norm_stats(train: &Dataset) -> Result<NormStats> {
    if train.is_empty() {
        return Err(Error::data("cannot compute normalization statistics on an empty dataset"));
    }
    let mut sum = [0.0f64; 2];
    let mut count = 0usize;
    for seg in &train.segments {
        for t in 0..seg.len() {
            sum[0] += seg.channel(t, 0) as f64;
            sum[1] += seg.channel(t, 1) as f64;
        }
        count += seg.len();
    }
    let mu = [sum[0] / count as f64, sum[1] / count as f64];
    let mut sq = [0.0f64; 2];
    for seg in &train.segments {
        for t in 0..seg.len() {
            for ch in 0..2 {
                let d = seg.channel(t, ch) as f64 - mu[ch];
                sq[ch] += d * d;
            }
        }
    }
    let sigma = [(sq[0] / count as f64).sqrt(), (sq[1] / count as f64).sqrt()];
    for (ch, &s) in sigma.iter().enumerate() {
        if s <= 0.0 {
            return Err(Error::data(format!("channel {} is constant; zero standard deviation", ch)));
        }
    }
    Ok(NormStats { mu, sigma })
}

/// Elementwise `(x - mu) / sigma` per channel.
pub fn apply_znorm(ds: &Dataset, stats: &NormStats) -> Dataset {
    let segments = ds
        .segments
        .iter()
        .map(|seg| {
            let mut samples = Vec::with_capacity(seg.samples.len());
            for t in 0..seg.len() {
                for ch in 0..2 {
                    let v = (seg.channel(t, ch) as f64 - stats.mu[ch]) / stats.sigma[ch];
                    samples.push(v as f32);
                }
            }
            ScanSegment { samples, label: seg.label, meta: seg.meta }
        })
        .collect();
    ds.with_tag(segments, ds.split_tag)
}

/// Uniformly random window of `out_len` time steps; a pure copy of channel
/// values, both offset endpoints inclusive.
pub fn random_crop(seg: &ScanSegment, out_len: usize, rng: &mut Rng) -> Result<ScanSegment> {
    let t = seg.len();
    if out_len > t {
        return Err(Error::data(format!("crop length {} exceeds segment length {}", out_len, t)));
    }
    let offset = rng.below((t - out_len + 1) as u64) as usize;
    Ok(crop_at(seg, offset, out_len))
}

pub fn crop_at(seg: &ScanSegment, offset: usize, out_len: usize) -> ScanSegment {
    ScanSegment {
        samples: seg.samples[offset * 2..(offset + out_len) * 2].to_vec(),
        label: seg.label,
        meta: seg.meta,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(volunteer: u16, label: Label, samples: Vec<f32>) -> ScanSegment {
        ScanSegment {
            samples,
            label,
            meta: SegmentMeta { volunteer, angle: 0, direction: 0, repeat: 0 },
        }
    }

    fn tiny_dataset(volunteers: u16, per_vol: usize, t: usize) -> Dataset {
        let classes = Label::canonical_set();
        let mut segments = Vec::new();
        for v in 0..volunteers {
            for i in 0..per_vol {
                let label = classes[i % 20];
                let samples = (0..t * 2).map(|j| (v as f32) + 0.01 * j as f32).collect();
                segments.push(seg(v, label, samples));
            }
        }
        Dataset::new(segments, classes)
    }

    #[test]
    fn twenty_canonical_labels() {
        let set = Label::canonical_set();
        assert_eq!(set.len(), 20);
        assert_eq!(set[0], Label::Normal);
        assert_eq!(set[1], Label::LiftOff);
        assert_eq!(set[2].depth_mm(), Some(0.3));
        assert_eq!(set[19].depth_mm(), Some(2.0));
        for (i, l) in set.iter().enumerate() {
            assert_eq!(l.canonical_index(), i);
            assert_eq!(Label::from_canonical_index(i).unwrap(), *l);
        }
    }

    #[test]
    fn defect_grid_is_enforced() {
        assert!(Label::defect(2).is_err());
        assert!(Label::defect(21).is_err());
        assert!(Label::defect(3).is_ok());
    }

    #[test]
    fn decimate_keeps_every_fifth() {
        let ds = Dataset::new(
            vec![seg(0, Label::Normal, (0..20).map(|i| i as f32).collect())],
            Label::canonical_set(),
        );
        // T=10, factor 5 -> samples at t=0 and t=5
        let out = decimate(&ds, 5, false).unwrap();
        assert_eq!(out.segments[0].samples, vec![0.0, 1.0, 10.0, 11.0]);
        // factor 1 is the identity
        let id = decimate(&ds, 1, false).unwrap();
        assert_eq!(id.segments[0].samples, ds.segments[0].samples);
        // non-divisible length: T = 3
        let odd = Dataset::new(
            vec![seg(0, Label::Normal, vec![0.0; 6])],
            Label::canonical_set(),
        );
        assert!(decimate(&odd, 3, false).is_ok());
        assert!(decimate(&odd, 2, false).is_err());
    }

    #[test]
    fn split_partitions_and_rejects_overlap() {
        let ds = tiny_dataset(5, 4, 3);
        let (train, val, test) = split_by_volunteer(&ds, &[0], &[1]).unwrap();
        assert_eq!(train.len(), 12);
        assert_eq!(val.len(), 4);
        assert_eq!(test.len(), 4);
        assert_eq!(train.len() + val.len() + test.len(), ds.len());
        assert!(split_by_volunteer(&ds, &[0, 1], &[1]).is_err());
        // no volunteer appears in two splits
        for v in test.volunteer_ids() {
            assert!(!train.volunteer_ids().contains(&v));
            assert!(!val.volunteer_ids().contains(&v));
        }
    }

    #[test]
    fn single_volunteer_as_test_empties_train() {
        let ds = tiny_dataset(1, 20, 3);
        let (train, val, test) = split_by_volunteer(&ds, &[0], &[]).unwrap();
        assert!(train.is_empty());
        assert!(val.is_empty());
        assert_eq!(test.len(), 20);
    }

    #[test]
    fn norm_stats_closed_form() {
        // channel values {1,2,3}: mu=2, sigma=sqrt(2/3)
        let ds = Dataset::new(
            vec![seg(0, Label::Normal, vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0])],
            Label::canonical_set(),
        );
        let stats = compute_norm_stats(&ds).unwrap();
        let expect = (2.0f64 / 3.0).sqrt();
        for ch in 0..2 {
            assert!((stats.mu[ch] - 2.0).abs() < 1e-12);
            assert!((stats.sigma[ch] - expect).abs() < 1e-12);
        }
        assert!((expect - 0.8165).abs() < 1e-4);
    }

    #[test]
    fn constant_channel_is_a_zero_sigma_error() {
        let ds = Dataset::new(
            vec![seg(0, Label::Normal, vec![5.0, 1.0, 5.0, 2.0])],
            Label::canonical_set(),
        );
        assert!(compute_norm_stats(&ds).is_err());
    }

    #[test]
    fn znorm_scalar_example() {
        // single value 5 with mu=2, sigma=1.5 -> 2
        let ds = Dataset::new(
            vec![seg(0, Label::Normal, vec![5.0, 5.0])],
            Label::canonical_set(),
        );
        let out = apply_znorm(&ds, &NormStats { mu: [2.0, 2.0], sigma: [1.5, 1.5] });
        assert_eq!(out.segments[0].samples, vec![2.0, 2.0]);
        // identity when mu=0 sigma=1
        let id = apply_znorm(&ds, &NormStats { mu: [0.0, 0.0], sigma: [1.0, 1.0] });
        assert_eq!(id.segments[0].samples, ds.segments[0].samples);
    }

    #[test]
    fn self_normalization_is_idempotent() {
        let mut rng = Rng::new(3);
        let classes = Label::canonical_set();
        let segments = (0..10)
            .map(|v| {
                seg(
                    v,
                    classes[v as usize % 20],
                    (0..500).map(|_| rng.normal_scaled(3.0, 2.5) as f32).collect(),
                )
            })
            .collect();
        let ds = Dataset::new(segments, classes);
        let stats = compute_norm_stats(&ds).unwrap();
        let normed = apply_znorm(&ds, &stats);
        let after = compute_norm_stats(&normed).unwrap();
        for ch in 0..2 {
            assert!(after.mu[ch].abs() < 1e-6, "mu {}", after.mu[ch]);
            assert!((after.sigma[ch] - 1.0).abs() < 1e-4, "sigma {}", after.sigma[ch]);
        }
    }

    #[test]
    fn crop_hits_every_offset_and_copies_exactly() {
        let s = seg(0, Label::Normal, (0..500).map(|i| i as f32).collect());
        let mut rng = Rng::new(11);
        let mut seen = vec![false; 27];
        for _ in 0..2000 {
            let c = random_crop(&s, 224, &mut rng).unwrap();
            assert_eq!(c.len(), 224);
            let offset = c.samples[0] as usize / 2;
            seen[offset] = true;
            // pure windowing: values equal the source slice
            assert_eq!(c.samples[..], s.samples[offset * 2..(offset + 224) * 2]);
        }
        assert!(seen.iter().all(|&b| b), "offsets hit: {:?}", seen);
        // identity crop
        let full = random_crop(&s, 250, &mut rng).unwrap();
        assert_eq!(full.samples, s.samples);
        // cropping longer than the segment
        assert!(random_crop(&s, 251, &mut rng).is_err());
    }

    #[test]
    fn seeded_crop_offsets_replay() {
        let s = seg(0, Label::Normal, (0..500).map(|i| i as f32).collect());
        let offs = |seed: u64| -> Vec<f32> {
            let mut rng = Rng::stream(seed, "crop");
            (0..20).map(|_| random_crop(&s, 224, &mut rng).unwrap().samples[0]).collect()
        };
        assert_eq!(offs(42), offs(42));
        assert_ne!(offs(42), offs(43));
    }

    #[test]
    fn decimate_then_crop_commutes_for_aligned_offsets() {
        let s = seg(0, Label::Normal, (0..1000).map(|i| (i as f32).sin()).collect());
        let ds = Dataset::new(vec![s], Label::canonical_set());
        let dec = decimate(&ds, 5, false).unwrap();
        // crop decimated at offset k == decimate(crop raw at offset 5k)
        for k in [0usize, 3, 7] {
            let a = crop_at(&dec.segments[0], k, 50);
            let raw_crop = crop_at(&ds.segments[0], 5 * k, 250);
            let b = decimate(
                &Dataset::new(vec![raw_crop], Label::canonical_set()),
                5,
                false,
            )
            .unwrap();
            assert_eq!(a.samples, b.segments[0].samples);
        }
    }
}
