use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::Array2;

use super::Mat;

/// Real and imaginary DFT basis, `n x (n/2 + 1)`, so that `frame · cos` and
/// `frame · sin` are the real and imaginary parts of the forward transform.
#[derive(Debug)]
pub struct DftBasis {
    pub cos: Mat,
    pub sin: Mat,
}

pub fn dft_basis(n: usize) -> Arc<DftBasis> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<DftBasis>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut map = cache.lock().expect("dft cache poisoned");
    map.entry(n)
        .or_insert_with(|| {
            let bins = n / 2 + 1;
            // Reduce jk mod n before scaling so large products keep full precision.
            let angle = |j: usize, k: usize| 2.0 * PI * ((j * k) % n) as f64 / n as f64;
            Arc::new(DftBasis {
                cos: Array2::from_shape_fn((n, bins), |(j, k)| angle(j, k).cos()),
                sin: Array2::from_shape_fn((n, bins), |(j, k)| -angle(j, k).sin()),
            })
        })
        .clone()
}
