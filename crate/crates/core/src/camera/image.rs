/// Row-major single-channel image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image<P> {
    pub width: u32,
    pub height: u32,
    pub data: Vec<P>,
}

pub type Mask = Image<bool>;
/// Depth in integer units of the owning camera's `depth_unit`; 0 = missing.
pub type DepthImage = Image<u16>;

impl<P: Copy> Image<P> {
    pub fn new(width: u32, height: u32, fill: P) -> Self {
        Image {
            width,
            height,
            data: vec![fill; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn get(&self, i: u32, j: u32) -> P {
        self.data[j as usize * self.width as usize + i as usize]
    }

    #[inline]
    pub fn set(&mut self, i: u32, j: u32, v: P) {
        let w = self.width as usize;
        self.data[j as usize * w + i as usize] = v;
    }

    pub fn same_size<Q>(&self, other: &Image<Q>) -> bool {
        self.width == other.width && self.height == other.height
    }
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Coordinates `(i, j)` of foreground pixels in row-major order.
    pub fn foreground(&self) -> Vec<[f64; 2]> {
        let mut out = Vec::new();
        for j in 0..self.height {
            for i in 0..self.width {
                if self.get(i, j) {
                    out.push([i as f64, j as f64]);
                }
            }
        }
        out
    }

    /// Morphological erosion (`r < 0`) or dilation (`r > 0`) with a square
    /// structuring element of radius `|r|`.
    pub fn morph(&self, r: i32) -> Mask {
        if r == 0 {
            return self.clone();
        }
        let grow = r > 0;
        let r = r.unsigned_abs() as i64;
        let (w, h) = (self.width as i64, self.height as i64);
        let mut out = self.clone();
        for j in 0..h {
            for i in 0..w {
                let mut hit = !grow;
                'scan: for dj in -r..=r {
                    for di in -r..=r {
                        let (x, y) = (i + di, j + dj);
                        let v = x >= 0 && y >= 0 && x < w && y < h && self.get(x as u32, y as u32);
                        if grow && v {
                            hit = true;
                            break 'scan;
                        }
                        if !grow && !v {
                            hit = false;
                            break 'scan;
                        }
                    }
                }
                out.set(i as u32, j as u32, hit);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn morph_grows_and_shrinks() {
        let mut m = Mask::new(7, 7, false);
        m.set(3, 3, true);
        let d = m.morph(1);
        assert_eq!(d.count(), 9);
        assert_eq!(d.morph(-1), m);
        assert_eq!(m.foreground(), vec![[3.0, 3.0]]);
    }
}
