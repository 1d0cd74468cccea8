//! The MDDECT container format.
//!
//! A file is the magic string `MDDECT01`, seven little-endian 64-bit
//! unsigned extents `(volunteers, angles, directions, repeats, classes,
//! time, channels)`, then the payload as row-major 32-bit IEEE-754
//! little-endian floats. The class axis follows the canonical 20-label
//! ordering and the channel axis is (in-phase, quadrature).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Dataset, Label, ScanSegment, SegmentMeta};
use crate::error::{Error, Result};

pub const CONTAINER_MAGIC: &[u8; 8] = b"MDDECT01";

struct Extents {
    volunteers: usize,
    angles: usize,
    directions: usize,
    repeats: usize,
    classes: usize,
    time: usize,
    channels: usize,
}

impl Extents {
    fn segment_count(&self) -> usize {
        self.volunteers * self.angles * self.directions * self.repeats * self.classes
    }
}

pub fn read_container<R: Read>(r: &mut R) -> Result<Dataset> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != CONTAINER_MAGIC {
        return Err(Error::data("bad magic; not an MDDECT container"));
    }
    let mut dims = [0u64; 7];
    for d in dims.iter_mut() {
        let mut b = [0u8; 8];
        r.read_exact(&mut b).map_err(truncated)?;
        *d = u64::from_le_bytes(b);
    }
    let e = Extents {
        volunteers: dims[0] as usize,
        angles: dims[1] as usize,
        directions: dims[2] as usize,
        repeats: dims[3] as usize,
        classes: dims[4] as usize,
        time: dims[5] as usize,
        channels: dims[6] as usize,
    };
    if e.channels != 2 {
        return Err(Error::data(format!("container has {} channels, want 2 (I/Q)", e.channels)));
    }
    if e.classes != 20 {
        return Err(Error::data(format!(
            "container has {} classes; the canonical label set has 20",
            e.classes
        )));
    }
    let total = e.segment_count() * e.time * e.channels;
    if total == 0 || total > (1 << 33) {
        return Err(Error::data(format!("implausible container extents {:?}", dims)));
    }

    let classes = Label::canonical_set();
    let mut segments = Vec::with_capacity(e.segment_count());
    let mut payload = vec![0u8; e.time * e.channels * 4];
    for v in 0..e.volunteers {
        for a in 0..e.angles {
            for d in 0..e.directions {
                for rep in 0..e.repeats {
                    for k in 0..e.classes {
                        r.read_exact(&mut payload).map_err(truncated)?;
                        let mut samples = Vec::with_capacity(e.time * 2);
                        for chunk in payload.chunks_exact(4) {
                            let x = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
                            if !x.is_finite() {
                                return Err(Error::data(format!(
                                    "non-finite sample in segment (v={}, a={}, d={}, r={}, k={})",
                                    v, a, d, rep, k
                                )));
                            }
                            samples.push(x);
                        }
                        segments.push(ScanSegment {
                            samples,
                            label: classes[k],
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
    // trailing bytes mean the header lied about the extents
    let mut probe = [0u8; 1];
    match r.read(&mut probe) {
        Ok(0) => {}
        Ok(_) => return Err(Error::data("payload longer than the declared extents")),
        Err(e) => return Err(Error::Io(e)),
    }
    Ok(Dataset::new(segments, classes))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::data("truncated container: payload shorter than the declared extents")
    } else {
        Error::Io(e)
    }
}

pub fn load_container(path: &Path) -> Result<Dataset> {
    let mut r = BufReader::new(File::open(path)?);
    read_container(&mut r)
}

/// Infer the dense `(V,A,D,R,K,T,2)` extents of a dataset; errors unless the
/// segments fill that grid exactly once each.
fn infer_extents(ds: &Dataset) -> Result<Extents> {
    if ds.is_empty() {
        return Err(Error::data("cannot write an empty dataset"));
    }
    if ds.classes != Label::canonical_set() {
        return Err(Error::data("containers require the canonical 20-label class set"));
    }
    let time = ds.uniform_len()?;
    let mut volunteers = 0usize;
    let mut angles = 0usize;
    let mut directions = 0usize;
    let mut repeats = 0usize;
    for seg in &ds.segments {
        volunteers = volunteers.max(seg.meta.volunteer as usize + 1);
        angles = angles.max(seg.meta.angle as usize + 1);
        directions = directions.max(seg.meta.direction as usize + 1);
        repeats = repeats.max(seg.meta.repeat as usize + 1);
    }
    let e = Extents { volunteers, angles, directions, repeats, classes: 20, time, channels: 2 };
    if e.segment_count() != ds.len() {
        return Err(Error::data(format!(
            "dataset is not a dense grid: {} segments vs {}x{}x{}x{}x20 extents",
            ds.len(),
            volunteers,
            angles,
            directions,
            repeats
        )));
    }
    Ok(e)
}

pub fn write_container<W: Write>(w: &mut W, ds: &Dataset) -> Result<()> {
    let e = infer_extents(ds)?;
    // order segments by (v, a, d, r, k)
    let mut index: Vec<Option<usize>> = vec![None; ds.len()];
    for (i, seg) in ds.segments.iter().enumerate() {
        let m = seg.meta;
        let k = seg.label.canonical_index();
        let flat = ((((m.volunteer as usize * e.angles + m.angle as usize) * e.directions
            + m.direction as usize)
            * e.repeats
            + m.repeat as usize)
            * e.classes)
            + k;
        if index[flat].replace(i).is_some() {
            return Err(Error::data("two segments share the same (meta, label) grid cell"));
        }
    }
    w.write_all(CONTAINER_MAGIC)?;
    for d in [e.volunteers, e.angles, e.directions, e.repeats, e.classes, e.time, e.channels] {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for slot in index {
        let seg = &ds.segments[slot.expect("dense grid verified above")];
        for &v in &seg.samples {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_container(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_container(&mut w, ds)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthConfig};
    use crate::rng::Rng;

    fn tiny_synth() -> Dataset {
        let cfg = SynthConfig {
            volunteers: 2,
            angles: 2,
            directions: 1,
            repeats: 1,
            length: 40,
            ..SynthConfig::default()
        };
        synth_generate(&cfg, &mut Rng::new(5)).unwrap()
    }

    #[test]
    fn minimal_container_has_one_segment_per_class() {
        let cfg = SynthConfig {
            volunteers: 1,
            angles: 1,
            directions: 1,
            repeats: 1,
            length: 1250,
            ..SynthConfig::default()
        };
        let ds = synth_generate(&cfg, &mut Rng::new(1)).unwrap();
        let mut buf = Vec::new();
        write_container(&mut buf, &ds).unwrap();
        let back = read_container(&mut &buf[..]).unwrap();
        assert_eq!(back.len(), 20);
        assert_eq!(back.class_histogram().unwrap(), vec![1; 20]);
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let ds = tiny_synth();
        let mut buf = Vec::new();
        write_container(&mut buf, &ds).unwrap();
        let back = read_container(&mut &buf[..]).unwrap();
        assert_eq!(back.len(), ds.len());
        // reload and compare segment-by-segment via the grid order
        let mut buf2 = Vec::new();
        write_container(&mut buf2, &back).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn truncation_is_detected() {
        let ds = tiny_synth();
        let mut buf = Vec::new();
        write_container(&mut buf, &ds).unwrap();
        buf.truncate(buf.len() - 7);
        let err = read_container(&mut &buf[..]).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{}", err);
    }

    #[test]
    fn trailing_garbage_is_detected() {
        let ds = tiny_synth();
        let mut buf = Vec::new();
        write_container(&mut buf, &ds).unwrap();
        buf.extend_from_slice(&[0u8; 4]);
        assert!(read_container(&mut &buf[..]).is_err());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let buf = b"WRONGMAG".to_vec();
        assert!(read_container(&mut &buf[..]).is_err());
    }
}
