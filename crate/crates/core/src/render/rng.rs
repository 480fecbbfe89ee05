//! Counter-based sampling: every random number is a pure function of
//! (seed, pixel, sample, dimension), so the image does not depend on how
//! pixels are scheduled across threads.

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct SampleStream {
    key: u64,
    counter: u64,
}

impl SampleStream {
    pub fn new(seed: u64, pixel: u64, sample: u64) -> Self {
        let key = mix64(mix64(mix64(seed ^ 0x9e3779b97f4a7c15) ^ pixel) ^ sample.wrapping_mul(0xd1b54a32d192ed03));
        SampleStream { key, counter: 0 }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(0x9e3779b97f4a7c15)))
    }

    /// Uniform in [0, 1).
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next2(&mut self) -> [f64; 2] {
        [self.next_f64(), self.next_f64()]
    }

    pub fn next3(&mut self) -> [f64; 3] {
        [self.next_f64(), self.next_f64(), self.next_f64()]
    }
}
