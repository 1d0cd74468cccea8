//! Delimited-text export of I/Q traces for complex-plane plotting.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::Dataset;
use crate::error::Result;

/// One row per (segment, time step):
/// `sample,label,predicted,time,in_phase,quadrature`. The predicted column
/// is empty when no predictions are supplied.
pub fn write_complex_plane<W: Write>(
    w: &mut W,
    ds: &Dataset,
    predictions: Option<&[usize]>,
) -> Result<()> {
    writeln!(w, "sample,label,predicted,time,in_phase,quadrature")?;
    for (i, seg) in ds.segments.iter().enumerate() {
        let pred = predictions
            .and_then(|p| p.get(i))
            .map(|&k| ds.classes[k].display_name())
            .unwrap_or_default();
        let label = seg.label.display_name();
        for t in 0..seg.len() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                i,
                label,
                pred,
                t,
                seg.channel(t, 0),
                seg.channel(t, 1)
            )?;
        }
    }
    Ok(())
}

pub fn export_complex_plane(ds: &Dataset, predictions: Option<&[usize]>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_complex_plane(&mut w, ds, predictions)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Label, ScanSegment, SegmentMeta};

    fn one_segment_dataset(t: usize) -> Dataset {
        Dataset::new(
            vec![ScanSegment {
                samples: (0..t * 2).map(|i| i as f32).collect(),
                label: Label::Normal,
                meta: SegmentMeta { volunteer: 0, angle: 0, direction: 0, repeat: 0 },
            }],
            Label::canonical_set(),
        )
    }

    #[test]
    fn one_row_per_time_step_plus_header() {
        let ds = one_segment_dataset(250);
        let mut buf = Vec::new();
        write_complex_plane(&mut buf, &ds, None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 251);
        assert!(text.starts_with("sample,label,predicted,time,in_phase,quadrature"));
    }

    #[test]
    fn empty_dataset_writes_header_only() {
        let ds = Dataset::new(vec![], Label::canonical_set());
        let mut buf = Vec::new();
        write_complex_plane(&mut buf, &ds, None).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
    }

    #[test]
    fn predictions_fill_the_third_column() {
        let ds = one_segment_dataset(2);
        let mut buf = Vec::new();
        write_complex_plane(&mut buf, &ds, Some(&[1])).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row = text.lines().nth(1).unwrap();
        assert_eq!(row, "0,normal,lift-off,0,0,1");
    }
}
