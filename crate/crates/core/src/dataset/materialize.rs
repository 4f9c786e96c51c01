use std::fs;
use std::path::Path;

use super::sampling::build_dataset;
use super::spec::{DatasetSpec, Sample};
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.csv";

pub fn image_file_name(index: u64) -> String {
    format!("img_{index:07}.png")
}

/// Writes `n` items as PNGs plus a manifest with one row of factor values per image.
///
/// Manifest columns: `index`, `file`, `blank`, then one column per factor in spec order
/// (empty for blank items).
pub fn materialize(spec: &DatasetSpec, n: u64, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut w = csv::Writer::from_path(dir.join(MANIFEST))?;
    let mut header = vec!["index".to_string(), "file".into(), "blank".into()];
    header.extend(spec.factors.iter().map(|f| f.name.to_string()));
    w.write_record(&header)?;
    for (index, (img, sample)) in build_dataset(spec, n)?.enumerate() {
        let file = image_file_name(index as u64);
        img.save_png(dir.join(&file))?;
        let mut row = vec![index.to_string(), file, matches!(sample, Sample::Blank).to_string()];
        for f in &spec.factors {
            row.push(match &sample {
                Sample::Blank => String::new(),
                Sample::Factors(fv) => fv.get(f.name).map(|v| v.to_string()).unwrap_or_default(),
            });
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(dir.join(MANIFEST), e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::spec::CirclesDataset;
    use crate::images::Image;

    #[test]
    fn manifest_matches_images() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = DatasetSpec::circles(CirclesDataset::XY, 16);
        spec.blank_fraction = 0.2;
        materialize(&spec, 12, dir.path()).unwrap();
        let mut r = csv::Reader::from_path(dir.path().join(MANIFEST)).unwrap();
        let rows: Vec<csv::StringRecord> = r.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 12);
        let items: Vec<_> = build_dataset(&spec, 12).unwrap().collect();
        for (row, (img, sample)) in rows.iter().zip(&items) {
            let png = Image::load_png(dir.path().join(&row[1])).unwrap();
            assert_eq!(png.to_bytes(), img.to_bytes());
            assert_eq!(&row[2] == "true", *sample == Sample::Blank);
        }
        assert_eq!(&rows[3][1], "img_0000003.png");
    }
}
