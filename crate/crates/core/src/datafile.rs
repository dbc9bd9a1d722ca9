//! Flat record files holding the spatial and visual vectors of a dataset.
//!
//! Spatial record: `id u64 | x f64 | y f64` (24 bytes).
//! Visual record: `id u64 | v_0 f64 | ... | v_{d-1} f64` (8 + 8d bytes).
//! Both files are packed in dataset order.

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::model::{Dataset, ImageId};
use crate::pagestore::{FileRole, PageStore, Placement, RecordPointer};
use crate::rstar::DataFiles;

pub const SPATIAL_RECORD_LEN: usize = 24;

pub fn visual_record_len(dim: usize) -> usize {
    8 + 8 * dim
}

/// Where every image's records live, in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct DataLayout {
    pub files: DataFiles,
    pub spatial: Vec<RecordPointer>,
    pub visual: Vec<RecordPointer>,
}

impl DataLayout {
    pub fn write(store: &mut PageStore, dataset: &Dataset) -> Result<Self> {
        let spatial_file = store.create_file("spatial", FileRole::Data, Placement::Packed);
        let visual_file = store.create_file("visual", FileRole::Data, Placement::Packed);
        let mut spatial = Vec::with_capacity(dataset.len());
        let mut visual = Vec::with_capacity(dataset.len());
        let mut buf = Vec::with_capacity(visual_record_len(dataset.dim()));
        for img in dataset.images() {
            buf.clear();
            buf.extend_from_slice(&img.id.0.to_le_bytes());
            buf.extend_from_slice(&img.location.x.to_le_bytes());
            buf.extend_from_slice(&img.location.y.to_le_bytes());
            spatial.push(store.append_record(spatial_file, &buf)?);

            buf.clear();
            buf.extend_from_slice(&img.id.0.to_le_bytes());
            for v in &img.features {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            visual.push(store.append_record(visual_file, &buf)?);
        }
        Ok(Self {
            files: DataFiles {
                spatial: spatial_file,
                visual: visual_file,
            },
            spatial,
            visual,
        })
    }
}

pub fn decode_spatial(bytes: &[u8]) -> Result<(ImageId, Point)> {
    if bytes.len() != SPATIAL_RECORD_LEN {
        return Err(Error::Read(format!(
            "spatial record of {} bytes",
            bytes.len()
        )));
    }
    let f = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    Ok((
        ImageId(u64::from_le_bytes(bytes[0..8].try_into().unwrap())),
        Point::new(f(8), f(16)),
    ))
}

pub fn decode_visual(bytes: &[u8], dim: usize) -> Result<(ImageId, Vec<f64>)> {
    if bytes.len() != visual_record_len(dim) {
        return Err(Error::Read(format!(
            "visual record of {} bytes, expected {}",
            bytes.len(),
            visual_record_len(dim)
        )));
    }
    let id = ImageId(u64::from_le_bytes(bytes[0..8].try_into().unwrap()));
    let v = bytes[8..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((id, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GeoImage;
    use crate::pagestore::PageStoreConfig;

    #[test]
    fn records_decode_back() {
        let ds = Dataset::new(
            3,
            vec![
                GeoImage::new(4, Point::new(1.5, -2.0), vec![0.1, 0.2, 0.3]),
                GeoImage::new(9, Point::new(7.0, 8.0), vec![-1.0, 0.0, 1e-300]),
            ],
        )
        .unwrap();
        let mut store = PageStore::new(PageStoreConfig::default()).unwrap();
        let layout = DataLayout::write(&mut store, &ds).unwrap();
        for (img, (sp, vp)) in ds
            .images()
            .iter()
            .zip(layout.spatial.iter().zip(&layout.visual))
        {
            let (id, p) = decode_spatial(store.peek_record(sp).unwrap()).unwrap();
            assert_eq!((id, p), (img.id, img.location));
            let (id, v) = decode_visual(store.peek_record(vp).unwrap(), 3).unwrap();
            assert_eq!((id, v), (img.id, img.features.clone()));
        }
    }
}
