use super::{Image, ImageError, Result};
use crate::stereo::StereoPair;

/// Patch geometry in low-resolution pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchConfig {
    pub height: usize,
    pub width: usize,
    pub stride: usize,
    pub scale: usize,
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self {
            height: 30,
            width: 90,
            stride: 20,
            scale: 4,
        }
    }
}

impl PatchConfig {
    /// Patches per image: `(floor((h - ph) / s) + 1) * (floor((w - pw) / s) + 1)`.
    pub fn count(&self, lr_height: usize, lr_width: usize) -> usize {
        if lr_height < self.height || lr_width < self.width {
            return 0;
        }
        ((lr_height - self.height) / self.stride + 1) * ((lr_width - self.width) / self.stride + 1)
    }

    /// Low-resolution top-left corner `(x, y)` of patch `index` in an image
    /// `lr_width` pixels wide. Patches are numbered row-major.
    pub fn origin(&self, index: usize, lr_width: usize) -> (usize, usize) {
        let per_row = (lr_width - self.width) / self.stride + 1;
        ((index % per_row) * self.stride, (index / per_row) * self.stride)
    }
}

/// One training sample: co-located LR and HR crops of both views.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patch {
    pub lr: StereoPair<Image>,
    pub hr: StereoPair<Image>,
    /// Index of the source image pair.
    pub source: usize,
    /// LR top-left corner `(x, y)`.
    pub origin: (usize, usize),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PatchSet {
    pub patches: Vec<Patch>,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    /// Appends the patches of another image pair.
    pub fn extend_from(&mut self, lr: &StereoPair<Image>, hr: &StereoPair<Image>, config: PatchConfig) -> Result<()> {
        let source = self.patches.last().map_or(0, |p| p.source + 1);
        let mut more = extract_patches(lr, hr, config)?;
        for p in &mut more.patches {
            p.source = source;
        }
        self.patches.append(&mut more.patches);
        Ok(())
    }
}

/// Cuts aligned patches from both views at identical coordinates; HR patches
/// are cut at `scale`-times the LR coordinates.
pub fn extract_patches(lr: &StereoPair<Image>, hr: &StereoPair<Image>, config: PatchConfig) -> Result<PatchSet> {
    let (w, h) = (lr.left.width(), lr.left.height());
    for img in [&lr.left, &lr.right] {
        if img.width() < config.width || img.height() < config.height {
            return Err(ImageError::TooSmall {
                width: img.width(),
                height: img.height(),
                min_width: config.width,
                min_height: config.height,
            });
        }
        if (img.width(), img.height()) != (w, h) {
            return Err(ImageError::Unsupported("left and right views differ in size".into()));
        }
    }
    for img in [&hr.left, &hr.right] {
        if (img.width(), img.height()) != (w * config.scale, h * config.scale) {
            return Err(ImageError::ScaleMismatch {
                lr: (w, h),
                hr: (img.width(), img.height()),
                scale: config.scale,
            });
        }
    }
    let s = config.scale;
    let patches = (0..config.count(h, w))
        .map(|i| {
            let (x, y) = config.origin(i, w);
            let cut_lr = |img: &Image| img.crop(x, y, config.width, config.height);
            let cut_hr = |img: &Image| img.crop(x * s, y * s, config.width * s, config.height * s);
            Ok(Patch {
                lr: StereoPair::new(cut_lr(&lr.left)?, cut_lr(&lr.right)?),
                hr: StereoPair::new(cut_hr(&hr.left)?, cut_hr(&hr.right)?),
                source: 0,
                origin: (x, y),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PatchSet { patches })
}

/// Flip augmentation. A horizontal mirror of a stereo pair exchanges the
/// eyes, so `flip_h` also swaps left and right; `flip_v` does not.
pub fn augment(patch: &Patch, flip_h: bool, flip_v: bool) -> Patch {
    let apply = |img: &Image| {
        let img = if flip_h { img.flip_horizontal() } else { img.clone() };
        if flip_v {
            img.flip_vertical()
        } else {
            img
        }
    };
    let mut lr = StereoPair::new(apply(&patch.lr.left), apply(&patch.lr.right));
    let mut hr = StereoPair::new(apply(&patch.hr.left), apply(&patch.hr.right));
    if flip_h {
        lr = lr.swap();
        hr = hr.swap();
    }
    Patch {
        lr,
        hr,
        source: patch.source,
        origin: patch.origin,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(w: usize, h: usize) -> StereoPair<Image> {
        let img = Image::from_fn(w, h, |x, y| [(x % 251) as u8, (y % 251) as u8, 7]).unwrap();
        StereoPair::new(img.clone(), img.flip_vertical())
    }

    #[test]
    fn count_formula() {
        let c = PatchConfig::default();
        assert_eq!(c.count(30, 90), 1);
        assert_eq!(c.count(50, 110), 4);
        assert_eq!(c.count(29, 90), 0);
        assert_eq!(c.count(75, 200), 3 * 6);
    }

    #[test]
    fn patches_are_coordinate_aligned() {
        let c = PatchConfig::default();
        let set = extract_patches(&pair(110, 50), &pair(440, 200), c).unwrap();
        assert_eq!(set.len(), 4);
        let p = &set.patches[3];
        assert_eq!(p.origin, (20, 20));
        assert_eq!(p.lr.left.pixel(0, 0), [20, 20, 7]);
        assert_eq!(p.hr.left.pixel(0, 0), [80, 80, 7]);
        assert_eq!(p.hr.left.width(), 360);
        assert_eq!(p.hr.left.height(), 120);
    }

    #[test]
    fn undersized_and_misscaled_inputs_rejected() {
        let c = PatchConfig::default();
        assert!(matches!(
            extract_patches(&pair(80, 30), &pair(320, 120), c),
            Err(ImageError::TooSmall { .. })
        ));
        assert!(matches!(
            extract_patches(&pair(90, 30), &pair(180, 60), c),
            Err(ImageError::ScaleMismatch { .. })
        ));
    }

    #[test]
    fn flips() {
        let c = PatchConfig::default();
        let p = extract_patches(&pair(90, 30), &pair(360, 120), c).unwrap().patches.remove(0);
        assert_eq!(augment(&p, false, false), p);
        assert_eq!(augment(&augment(&p, true, false), true, false), p);
        assert_eq!(augment(&augment(&p, false, true), false, true), p);
        let h = augment(&p, true, false);
        assert_eq!(h.lr.left, p.lr.right.flip_horizontal());
        assert_eq!(h.hr.right, p.hr.left.flip_horizontal());
        let v = augment(&p, false, true);
        assert_eq!(v.lr.left, p.lr.left.flip_vertical());
    }
}
