use crate::error::{Error, Result};

/// Dense 4-D tensor in (n, c, h, w) layout, row-major, f64 throughout.
/// w is the fastest-varying axis. All feature maps, parameters and gradients
/// in this crate use this one container.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor4 {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn filled(n: usize, c: usize, h: usize, w: usize, value: f64) -> Self {
        Tensor4 {
            n,
            c,
            h,
            w,
            data: vec![value; n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * c * h * w {
            return Err(Error::shape(
                "Tensor4::from_vec",
                format!("{} values for {}x{}x{}x{}", n * c * h * w, n, c, h, w),
                format!("{} values", data.len()),
            ));
        }
        Ok(Tensor4 { n, c, h, w, data })
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.n, self.c, self.h, self.w)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn c(&self) -> usize {
        self.c
    }

    #[inline]
    pub fn h(&self) -> usize {
        self.h
    }

    #[inline]
    pub fn w(&self) -> usize {
        self.w
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        debug_assert!(n < self.n && c < self.c && h < self.h && w < self.w);
        ((n * self.c + c) * self.h + h) * self.w + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.index(n, c, h, w)]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, h: usize, w: usize) -> &mut f64 {
        let i = self.index(n, c, h, w);
        &mut self.data[i]
    }

    /// One (n, c) spatial plane as a contiguous h*w slice.
    #[inline]
    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let base = (n * self.c + c) * self.h * self.w;
        &self.data[base..base + self.h * self.w]
    }

    #[inline]
    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let base = (n * self.c + c) * self.h * self.w;
        let end = base + self.h * self.w;
        &mut self.data[base..end]
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    pub fn same_dims(&self, other: &Tensor4) -> bool {
        self.dims() == other.dims()
    }

    /// Elementwise self += other. Dims must already match.
    pub fn add_assign(&mut self, other: &Tensor4) {
        assert_eq!(self.dims(), other.dims(), "add_assign dims");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Elementwise self += scale * other.
    pub fn add_scaled(&mut self, other: &Tensor4, scale: f64) {
        assert_eq!(self.dims(), other.dims(), "add_scaled dims");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Tensor4 {
        Tensor4 {
            n: self.n,
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_row_major_w_fastest() {
        let mut t = Tensor4::zeros(2, 3, 4, 5);
        *t.at_mut(1, 2, 3, 4) = 7.0;
        // Last element of the buffer.
        assert_eq!(t.data()[2 * 3 * 4 * 5 - 1], 7.0);
        *t.at_mut(0, 0, 0, 1) = 3.0;
        assert_eq!(t.data()[1], 3.0);
        *t.at_mut(0, 0, 1, 0) = 4.0;
        assert_eq!(t.data()[5], 4.0);
        *t.at_mut(0, 1, 0, 0) = 5.0;
        assert_eq!(t.data()[20], 5.0);
        *t.at_mut(1, 0, 0, 0) = 6.0;
        assert_eq!(t.data()[60], 6.0);
    }

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(Tensor4::from_vec(1, 1, 2, 2, vec![0.0; 3]).is_err());
        assert!(Tensor4::from_vec(1, 1, 2, 2, vec![0.0; 4]).is_ok());
    }

    #[test]
    fn plane_slices_match_at() {
        let mut t = Tensor4::zeros(2, 2, 2, 2);
        for i in 0..t.len() {
            t.data_mut()[i] = i as f64;
        }
        let p = t.plane(1, 0);
        assert_eq!(p.len(), 4);
        assert_eq!(p[0], t.at(1, 0, 0, 0));
        assert_eq!(p[3], t.at(1, 0, 1, 1));
    }

    #[test]
    fn add_scaled_accumulates() {
        let mut a = Tensor4::filled(1, 1, 1, 3, 1.0);
        let b = Tensor4::from_vec(1, 1, 1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        a.add_scaled(&b, 0.5);
        assert_eq!(a.data(), &[1.5, 2.0, 2.5]);
    }
}
