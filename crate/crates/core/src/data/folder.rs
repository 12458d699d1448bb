use std::fs;
use std::path::{Path, PathBuf};

use image::DynamicImage;
use rayon::prelude::*;

use super::{Grid, ImageSample, LabeledDataset};
use crate::{Error, Result};

/// Loads `<root>/<class_name>/*.png`. Classes are indexed in lexicographic
/// order of their directory names; gray values are normalized to `[0, 1]`.
pub fn load_image_folder(root: &Path) -> Result<LabeledDataset> {
    if !root.is_dir() {
        return Err(Error::Dataset {
            path: root.to_path_buf(),
            message: "dataset directory does not exist".into(),
        });
    }
    let mut class_dirs: Vec<(String, PathBuf)> = read_dir_sorted(root)?
        .into_iter()
        .filter(|p| p.is_dir())
        .map(|p| (file_name(&p), p))
        .collect();
    class_dirs.sort_by(|a, b| a.0.cmp(&b.0));
    if class_dirs.is_empty() {
        return Err(Error::Dataset {
            path: root.to_path_buf(),
            message: "no class subdirectories found".into(),
        });
    }

    let mut jobs = Vec::new();
    for (label, (name, dir)) in class_dirs.iter().enumerate() {
        let files: Vec<PathBuf> = read_dir_sorted(dir)?
            .into_iter()
            .filter(|p| p.is_file() && is_png(p))
            .collect();
        if files.is_empty() {
            return Err(Error::Dataset {
                path: dir.clone(),
                message: format!("class directory {name} contains no PNG images"),
            });
        }
        jobs.extend(files.into_iter().map(|f| (label, name.clone(), f)));
    }

    let samples = jobs
        .par_iter()
        .map(|(label, class, path)| {
            let img = image::open(path).map_err(|source| Error::Image {
                path: path.clone(),
                source,
            })?;
            Ok(ImageSample {
                id: format!("{class}/{}", file_name(path)),
                pixels: to_gray(&img)?,
                original_label: *label,
                split: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    LabeledDataset::new(samples, class_dirs.into_iter().map(|(n, _)| n).collect())
}

fn to_gray(img: &DynamicImage) -> Result<Grid> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values = match img {
        DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgb16(_)
        | DynamicImage::ImageRgba16(_) => img
            .to_luma16()
            .into_raw()
            .into_iter()
            .map(|v| f64::from(v) / f64::from(u16::MAX))
            .collect(),
        _ => img
            .to_luma8()
            .into_raw()
            .into_iter()
            .map(|v| f64::from(v) / 255.0)
            .collect(),
    };
    Grid::new(h, w, values)
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

fn is_png(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, Luma};

    fn write_png(path: &Path, value: u8) {
        let img = GrayImage::from_pixel(4, 3, Luma([value]));
        img.save(path).unwrap();
    }

    #[test]
    fn loads_classes_in_lexicographic_order() {
        let dir = tempfile::tempdir().unwrap();
        for (class, n) in [("b", 3), ("a", 2)] {
            let d = dir.path().join(class);
            fs::create_dir(&d).unwrap();
            for i in 0..n {
                write_png(&d.join(format!("{i}.png")), 255);
            }
        }
        let ds = load_image_folder(dir.path()).unwrap();
        assert_eq!(ds.class_count, 2);
        assert_eq!(ds.len(), 5);
        assert_eq!(ds.class_names, vec!["a", "b"]);
        assert_eq!(ds.class_sizes(), vec![2, 3]);
        let s = &ds.samples[0];
        assert_eq!((s.pixels.height, s.pixels.width), (3, 4));
        assert!(s.pixels.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn empty_class_directory_is_named() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("full")).unwrap();
        write_png(&dir.path().join("full/x.png"), 10);
        fs::create_dir(dir.path().join("hollow")).unwrap();
        let err = load_image_folder(dir.path()).unwrap_err().to_string();
        assert!(err.contains("hollow"), "{err}");
    }

    #[test]
    fn missing_directory_and_bad_image() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope");
        assert!(load_image_folder(&missing).unwrap_err().to_string().contains("nope"));

        fs::create_dir(dir.path().join("c")).unwrap();
        fs::write(dir.path().join("c/broken.png"), b"not a png").unwrap();
        let err = load_image_folder(dir.path()).unwrap_err().to_string();
        assert!(err.contains("broken.png"), "{err}");
    }
}
