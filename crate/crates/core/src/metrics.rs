//! Per-cell SNR, SNR gains and artifact energy against simulator truth.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::MaskImage;
use crate::simulate::{PixelKind, SimGroundTruth};
use crate::stack::DynamicImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSnr {
    pub cell_id: u32,
    pub snr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrReport {
    pub per_cell_snr: Vec<CellSnr>,
    pub mean_snr: f64,
    pub n_cells: usize,
    pub background_mean: f64,
}

fn check_dims(image: &DynamicImage, width: usize, height: usize) -> Result<()> {
    if image.width() != width || image.height() != height {
        return Err(Error::DimensionMismatch(format!(
            "image is {}x{}, reference is {width}x{height}",
            image.width(),
            image.height()
        )));
    }
    Ok(())
}

/// SNR of every labelled cell: mean over the cell divided by the mean over
/// label 0.
pub fn snr_per_cell(image: &DynamicImage, mask: &MaskImage) -> Result<SnrReport> {
    check_dims(image, mask.width(), mask.height())?;
    let ids = mask.cell_ids();
    let max_id = ids.last().copied().unwrap_or(0) as usize;
    let mut sums = vec![0.0f64; max_id + 1];
    let mut counts = vec![0usize; max_id + 1];
    for (&label, &v) in mask.labels().iter().zip(image.values()) {
        sums[label as usize] += f64::from(v);
        counts[label as usize] += 1;
    }
    if counts[0] == 0 {
        return Err(Error::EmptyRegion { label: 0 });
    }
    let background_mean = sums[0] / counts[0] as f64;
    if background_mean == 0.0 {
        return Err(Error::ZeroBackground);
    }
    let per_cell_snr: Vec<CellSnr> = ids
        .iter()
        .map(|&id| CellSnr {
            cell_id: id,
            snr: sums[id as usize] / counts[id as usize] as f64 / background_mean,
        })
        .collect();
    let n_cells = per_cell_snr.len();
    let mean_snr = if n_cells == 0 {
        0.0
    } else {
        per_cell_snr.iter().map(|c| c.snr).sum::<f64>() / n_cells as f64
    };
    Ok(SnrReport {
        per_cell_snr,
        mean_snr,
        n_cells,
        background_mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellGain {
    pub cell_id: u32,
    pub snr_a: f64,
    pub snr_b: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrGain {
    pub per_cell: Vec<CellGain>,
    /// Mean of the per-cell ratios `snr_b / snr_a`.
    pub mean_gain: f64,
}

/// Per-cell gain `snr_b / snr_a`; both reports must cover the same cells.
pub fn snr_gain(a: &SnrReport, b: &SnrReport) -> Result<SnrGain> {
    if a.per_cell_snr.len() != b.per_cell_snr.len() {
        return Err(Error::MismatchedCells(format!(
            "{} cells vs {} cells",
            a.per_cell_snr.len(),
            b.per_cell_snr.len()
        )));
    }
    let mut per_cell = Vec::with_capacity(a.per_cell_snr.len());
    for (ca, cb) in a.per_cell_snr.iter().zip(&b.per_cell_snr) {
        if ca.cell_id != cb.cell_id {
            return Err(Error::MismatchedCells(format!(
                "cell {} vs cell {}",
                ca.cell_id, cb.cell_id
            )));
        }
        per_cell.push(CellGain {
            cell_id: ca.cell_id,
            snr_a: ca.snr,
            snr_b: cb.snr,
            gain: cb.snr / ca.snr,
        });
    }
    let mean_gain = if per_cell.is_empty() {
        f64::NAN
    } else {
        per_cell.iter().map(|c| c.gain).sum::<f64>() / per_cell.len() as f64
    };
    Ok(SnrGain {
        per_cell,
        mean_gain,
    })
}

/// Writes the `cell_id,snr_a,snr_b,gain` table.
pub fn write_gain_csv(gain: &SnrGain, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let to_err = |e: csv::Error| {
        let source = match e.into_kind() {
            csv::ErrorKind::Io(e) => e,
            other => std::io::Error::other(format!("{other:?}")),
        };
        Error::io(path, source)
    };
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    for row in &gain.per_cell {
        w.serialize(row).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Mean dynamic value per ground-truth class; `None` for an empty class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEnergy {
    pub static_mean: Option<f64>,
    pub motile_mean: Option<f64>,
    pub background_mean: Option<f64>,
}

pub fn artifact_energy(image: &DynamicImage, truth: &SimGroundTruth) -> Result<ArtifactEnergy> {
    check_dims(image, truth.width, truth.height)?;
    let mut sums = [0.0f64; 3];
    let mut counts = [0usize; 3];
    for (&kind, &v) in truth.label_map.iter().zip(image.values()) {
        let i = match kind {
            PixelKind::StaticReflector => 0,
            PixelKind::Motile => 1,
            PixelKind::Background => 2,
        };
        sums[i] += f64::from(v);
        counts[i] += 1;
    }
    let mean = |i: usize| (counts[i] > 0).then(|| sums[i] / counts[i] as f64);
    Ok(ArtifactEnergy {
        static_mean: mean(0),
        motile_mean: mean(1),
        background_mean: mean(2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn image(w: usize, h: usize, values: Vec<f32>) -> DynamicImage {
        DynamicImage::new(w, h, values).unwrap()
    }

    #[test]
    fn uniform_image_gives_unit_snr() {
        let mask = MaskImage::new(3, 2, vec![0, 1, 1, 0, 2, 0]).unwrap();
        let r = snr_per_cell(&image(3, 2, vec![7.0; 6]), &mask).unwrap();
        assert_eq!(r.n_cells, 2);
        assert!(r.per_cell_snr.iter().all(|c| (c.snr - 1.0).abs() < 1e-12));
    }

    #[test]
    fn cells_twice_background() {
        let labels = vec![0, 1, 2, 0];
        let values = labels.iter().map(|&l| if l == 0 { 2.0 } else { 4.0 }).collect();
        let r = snr_per_cell(&image(2, 2, values), &MaskImage::new(2, 2, labels).unwrap()).unwrap();
        assert_eq!(r.background_mean, 2.0);
        assert!(r.per_cell_snr.iter().all(|c| c.snr == 2.0));
    }

    #[test]
    fn matches_brute_force_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (w, h) = (9, 7);
        let labels: Vec<u32> = (0..w * h).map(|i| if i < 5 { 0 } else { rng.random_range(0..5) }).collect();
        let values: Vec<f32> = (0..w * h).map(|_| rng.random_range(0.1f32..3.0)).collect();
        let mask = MaskImage::new(w, h, labels.clone()).unwrap();
        let r = snr_per_cell(&image(w, h, values.clone()), &mask).unwrap();
        let mean_of = |id: u32| {
            let v: Vec<f64> = labels
                .iter()
                .zip(&values)
                .filter(|(l, _)| **l == id)
                .map(|(_, v)| f64::from(*v))
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        for c in &r.per_cell_snr {
            assert!((c.snr - mean_of(c.cell_id) / mean_of(0)).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_background_rejected() {
        let mask = MaskImage::new(2, 1, vec![1, 2]).unwrap();
        assert!(matches!(
            snr_per_cell(&image(2, 1, vec![1.0, 1.0]), &mask),
            Err(Error::EmptyRegion { label: 0 })
        ));
        let mask = MaskImage::new(2, 1, vec![0, 1]).unwrap();
        assert!(matches!(
            snr_per_cell(&image(2, 1, vec![0.0, 1.0]), &mask),
            Err(Error::ZeroBackground)
        ));
        assert!(matches!(
            snr_per_cell(&image(1, 2, vec![0.0, 1.0]), &mask),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn gains() {
        let mask = MaskImage::new(2, 2, vec![0, 1, 2, 0]).unwrap();
        let a = snr_per_cell(&image(2, 2, vec![1.0, 2.0, 3.0, 1.0]), &mask).unwrap();
        let g = snr_gain(&a, &a).unwrap();
        assert!(g.per_cell.iter().all(|c| c.gain == 1.0));
        let b = snr_per_cell(&image(2, 2, vec![1.0, 4.0, 6.0, 1.0]), &mask).unwrap();
        assert!((snr_gain(&a, &b).unwrap().mean_gain - 2.0).abs() < 1e-12);

        let other = MaskImage::new(2, 2, vec![0, 1, 3, 0]).unwrap();
        let c = snr_per_cell(&image(2, 2, vec![1.0, 2.0, 3.0, 1.0]), &other).unwrap();
        assert!(matches!(snr_gain(&a, &c), Err(Error::MismatchedCells(_))));
    }

    #[test]
    fn gain_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        let g = SnrGain {
            per_cell: vec![CellGain {
                cell_id: 3,
                snr_a: 1.5,
                snr_b: 3.0,
                gain: 2.0,
            }],
            mean_gain: 2.0,
        };
        write_gain_csv(&g, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "cell_id,snr_a,snr_b,gain\n3,1.5,3.0,2.0\n");
    }

    fn truth(labels: Vec<PixelKind>) -> SimGroundTruth {
        let n = labels.len();
        SimGroundTruth {
            width: n,
            height: 1,
            label_map: labels,
            region_map: vec![0; n],
            motility_map: vec![0.0; n],
            z_trace_nm: vec![],
        }
    }

    #[test]
    fn artifact_energy_by_class() {
        use PixelKind::*;
        let t = truth(vec![Background, StaticReflector, Motile, Motile]);
        let e = artifact_energy(&image(4, 1, vec![0.0; 4]), &t).unwrap();
        assert_eq!((e.static_mean, e.motile_mean, e.background_mean), (Some(0.0), Some(0.0), Some(0.0)));
        let e = artifact_energy(&image(4, 1, vec![0.0, 0.0, 1.0, 1.0]), &t).unwrap();
        assert_eq!((e.static_mean, e.motile_mean, e.background_mean), (Some(0.0), Some(1.0), Some(0.0)));
        let t = truth(vec![Background, Motile]);
        let e = artifact_energy(&image(2, 1, vec![1.0, 2.0]), &t).unwrap();
        assert_eq!(e.static_mean, None);
    }
}
