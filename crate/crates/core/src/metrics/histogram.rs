use crate::error::{Error, Result};
use crate::scalar::Real;

/// Density-normalized histogram on `[lo, hi)`; the last bin also takes `hi`.
#[derive(Clone, Debug)]
pub struct Histogram<T> {
    pub lo: T,
    pub hi: T,
    pub densities: Vec<T>,
    /// Samples inside the range; the densities integrate to 1 over them.
    pub in_range: usize,
}

impl<T: Real> Histogram<T> {
    pub fn bin_width(&self) -> T {
        (self.hi - self.lo) / T::count(self.densities.len())
    }

    pub fn bin_center(&self, b: usize) -> T {
        self.lo + (T::count(b) + T::lit(0.5)) * self.bin_width()
    }
}

pub fn histogram<T: Real>(samples: &[T], bins: usize, range: (T, T)) -> Result<Histogram<T>> {
    let (lo, hi) = range;
    if bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid("histogram range must be a finite nonempty interval"));
    }
    let width = (hi - lo) / T::count(bins);
    let mut counts = vec![0usize; bins];
    for &x in samples {
        if !(x >= lo && x <= hi) {
            continue;
        }
        let b = ((x - lo) / width).floor().to_usize().unwrap_or(bins).min(bins - 1);
        counts[b] += 1;
    }
    let in_range: usize = counts.iter().sum();
    let norm = if in_range == 0 {
        T::zero()
    } else {
        T::one() / (T::count(in_range) * width)
    };
    Ok(Histogram {
        lo,
        hi,
        densities: counts.into_iter().map(|c| T::count(c) * norm).collect(),
        in_range,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bin_density_is_inverse_width() {
        let h = histogram(&[0.1, 0.5, 1.9], 1, (0.0, 2.0)).unwrap();
        assert_eq!(h.densities, vec![0.5]);
    }

    #[test]
    fn uniform_grid_is_flat() {
        let s: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let h = histogram(&s, 10, (0.0, 1.0)).unwrap();
        assert!(h.densities.iter().all(|&d| (d - 1.0).abs() < 1e-12));
    }
}
