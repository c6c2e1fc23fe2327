use std::path::{Path, PathBuf};

use dlpr::measurement::container::{self, MAGIC_MASK};
use dlpr::{phantom, ComplexImage, Error};
use num_complex::Complex64 as C64;

use crate::pgm;

/// Reads a graymap (real part, imaginary part zero) or a CPRM container,
/// chosen by the leading magic bytes.
pub fn load_image(path: &Path) -> Result<ComplexImage, Error> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(MAGIC_MASK) {
        let (rows, cols, data) = container::decode(&bytes, MAGIC_MASK)?;
        return ComplexImage::new(rows, cols, data);
    }
    let g = pgm::decode(&bytes)?;
    ComplexImage::from_real(g.rows, g.cols, &g.values)
}

/// Real and imaginary parts from two graymaps of equal size.
pub fn load_image_pair(re: &Path, im: &Path) -> Result<ComplexImage, Error> {
    let a = pgm::read(re)?;
    let b = pgm::read(im)?;
    if (a.rows, a.cols) != (b.rows, b.cols) {
        return Err(Error::InvalidParameter(format!(
            "paired images differ in size: {}x{} vs {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let data = a.values.iter().zip(&b.values).map(|(&x, &y)| C64::new(x, y)).collect();
    ComplexImage::new(a.rows, a.cols, data)
}

pub fn save_cprm(path: &Path, u: &ComplexImage) -> Result<(), Error> {
    container::write_file(path, MAGIC_MASK, u.rows(), u.cols(), u.as_slice())
}

/// Where a ground-truth image comes from.
///
/// Config syntax: `path.pgm`, `path.cprm`, `re.pgm+im.pgm`, `synthetic:blobs[:seed]`,
/// `synthetic:disks[:seed]`.
#[derive(Clone, Debug, PartialEq)]
pub enum ImageSource {
    File(PathBuf),
    Pair(PathBuf, PathBuf),
    Blobs { seed: u64 },
    Disks { seed: u64 },
}

impl ImageSource {
    pub fn parse(text: &str) -> Result<Self, String> {
        let text = text.trim();
        if text.is_empty() {
            return Err("empty image entry".into());
        }
        if let Some(rest) = text.strip_prefix("synthetic:") {
            let mut parts = rest.split(':');
            let kind = parts.next().unwrap_or("");
            let seed = match parts.next() {
                None => 1,
                Some(s) => s.parse().map_err(|_| format!("bad synthetic seed {s:?}"))?,
            };
            if parts.next().is_some() {
                return Err(format!("bad synthetic image {text:?}"));
            }
            return match kind {
                "blobs" => Ok(ImageSource::Blobs { seed }),
                "disks" => Ok(ImageSource::Disks { seed }),
                _ => Err(format!("unknown synthetic image {kind:?} (blobs, disks)")),
            };
        }
        match text.split_once('+') {
            Some((re, im)) => Ok(ImageSource::Pair(re.trim().into(), im.trim().into())),
            None => Ok(ImageSource::File(text.into())),
        }
    }

    /// Short label used in output paths and tables.
    pub fn name(&self) -> String {
        let stem = |p: &Path| {
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "image".into())
        };
        match self {
            ImageSource::File(p) | ImageSource::Pair(p, _) => stem(p),
            ImageSource::Blobs { seed } => format!("blobs{seed}"),
            ImageSource::Disks { seed } => format!("disks{seed}"),
        }
    }

    /// Loads the image; synthetic images are generated at `size` (default 128),
    /// files are center-cropped to `size` when one is given.
    pub fn load(&self, size: Option<usize>) -> Result<ComplexImage, Error> {
        let u = match self {
            ImageSource::Blobs { seed } => {
                let n = size.unwrap_or(128);
                return phantom::smooth_blobs(n, n, *seed);
            }
            ImageSource::Disks { seed } => {
                let n = size.unwrap_or(128);
                return phantom::disks_phantom(n, n, *seed);
            }
            ImageSource::File(p) => load_image(p)?,
            ImageSource::Pair(re, im) => load_image_pair(re, im)?,
        };
        match size {
            Some(n) => center_crop(&u, n),
            None => Ok(u),
        }
    }
}

pub fn center_crop(u: &ComplexImage, side: usize) -> Result<ComplexImage, Error> {
    if side > u.rows() || side > u.cols() || side == 0 {
        return Err(Error::InvalidParameter(format!(
            "cannot crop {}x{} image to {side}x{side}",
            u.rows(),
            u.cols()
        )));
    }
    let r0 = (u.rows() - side) / 2;
    let c0 = (u.cols() - side) / 2;
    let mut data = Vec::with_capacity(side * side);
    for i in 0..side {
        for j in 0..side {
            data.push(u.get(r0 + i, c0 + j));
        }
    }
    ComplexImage::new(side, side, data)
}
