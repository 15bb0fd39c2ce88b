use super::ModelError;

/// Row-major 16-bit label image (semantic class ids or visual segment ids).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRaster {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<u16>,
}

impl LabelRaster {
    pub fn new(width: u32, height: u32, labels: Vec<u16>) -> Result<Self, ModelError> {
        let r = LabelRaster { width, height, labels };
        r.check_len("labels")?;
        Ok(r)
    }

    pub fn filled(width: u32, height: u32, label: u16) -> Self {
        LabelRaster { width, height, labels: vec![label; width as usize * height as usize] }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u16) -> Self {
        let mut labels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                labels.push(f(x, y));
            }
        }
        LabelRaster { width, height, labels }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u16 {
        self.labels[y as usize * self.width as usize + x as usize]
    }

    /// Label under a sub-pixel position, `None` outside the raster.
    pub fn at_px(&self, px: &crate::Vec2) -> Option<u16> {
        pixel_index(self.width, self.height, px).map(|i| self.labels[i])
    }

    pub(crate) fn check_len(&self, field: &str) -> Result<(), ModelError> {
        let want = self.width as usize * self.height as usize;
        if self.labels.len() != want {
            return Err(ModelError::invariant(
                "",
                field,
                format!("{} labels for a {}x{} raster", self.labels.len(), self.width, self.height),
            ));
        }
        Ok(())
    }
}

/// Row-major binary raster registered to one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChangeMask {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl ChangeMask {
    pub fn empty(image_id: impl Into<String>, width: u32, height: u32) -> Self {
        ChangeMask {
            image_id: image_id.into(),
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn full(image_id: impl Into<String>, width: u32, height: u32) -> Self {
        let mut m = Self::empty(image_id, width, height);
        m.bits.fill(true);
        m
    }

    pub fn from_fn(
        image_id: impl Into<String>,
        width: u32,
        height: u32,
        mut f: impl FnMut(u32, u32) -> bool,
    ) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        ChangeMask { image_id: image_id.into(), width, height, bits }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let want = self.width as usize * self.height as usize;
        if self.bits.len() != want {
            return Err(ModelError::invariant(
                &self.image_id,
                "mask.bits",
                format!("{} bits for a {}x{} mask", self.bits.len(), self.width, self.height),
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let w = self.width as usize;
        self.bits[y as usize * w + x as usize] = v;
    }

    /// Bit under a sub-pixel position; positions outside the raster read as unset.
    pub fn at_px(&self, px: &crate::Vec2) -> bool {
        pixel_index(self.width, self.height, px).is_some_and(|i| self.bits[i])
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn same_dims(&self, other: &ChangeMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Pixelwise AND; panics on dimension mismatch.
    pub fn and(&self, other: &ChangeMask) -> ChangeMask {
        assert!(self.same_dims(other), "mask dimension mismatch");
        ChangeMask {
            image_id: self.image_id.clone(),
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect(),
        }
    }

    pub fn is_subset_of(&self, other: &ChangeMask) -> bool {
        self.same_dims(other) && self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }

    /// Intersection over union; two empty masks score 1.
    pub fn iou(&self, other: &ChangeMask) -> f64 {
        assert!(self.same_dims(other), "mask dimension mismatch");
        let (mut inter, mut union) = (0usize, 0usize);
        for (a, b) in self.bits.iter().zip(&other.bits) {
            inter += usize::from(*a && *b);
            union += usize::from(*a || *b);
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect()
    }
}

/// Flat index of the pixel containing `px` (x right, y down, origin top-left).
pub fn pixel_index(width: u32, height: u32, px: &crate::Vec2) -> Option<usize> {
    if !(px.x >= 0.0 && px.y >= 0.0) {
        return None;
    }
    let (x, y) = (px.x.floor(), px.y.floor());
    if x >= f64::from(width) || y >= f64::from(height) {
        return None;
    }
    Some(y as usize * width as usize + x as usize)
}

/// 4-connected component labelling of pixels where `select` holds.
///
/// Returns one label per pixel (`u32::MAX` for unselected pixels) and, per
/// component, its pixel count and whether it touches the raster border.
pub fn components_4(
    width: u32,
    height: u32,
    select: impl Fn(usize) -> bool,
) -> (Vec<u32>, Vec<Component>) {
    let (w, h) = (width as usize, height as usize);
    let mut labels = vec![u32::MAX; w * h];
    let mut comps = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if labels[start] != u32::MAX || !select(start) {
            continue;
        }
        let id = comps.len() as u32;
        let mut comp = Component { area: 0, touches_border: false };
        labels[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            comp.area += 1;
            let (x, y) = (i % w, i / w);
            if x == 0 || y == 0 || x + 1 == w || y + 1 == h {
                comp.touches_border = true;
            }
            let mut visit = |j: usize| {
                if labels[j] == u32::MAX && select(j) {
                    labels[j] = id;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        comps.push(comp);
    }
    (labels, comps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Component {
    pub area: usize,
    pub touches_border: bool,
}
