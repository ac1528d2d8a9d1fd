use super::Extension;

/// Fixed-size bitset over dataset rows. Used by the search to intersect
/// condition extensions cheaply.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RowMask {
    words: Vec<u64>,
    n: usize,
}

impl RowMask {
    pub fn empty(n: usize) -> Self {
        Self { words: vec![0; n.div_ceil(64)], n }
    }

    pub fn full(n: usize) -> Self {
        let mut m = Self { words: vec![u64::MAX; n.div_ceil(64)], n };
        m.clear_tail();
        m
    }

    fn clear_tail(&mut self) {
        let rem = self.n % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn insert(&mut self, i: usize) {
        debug_assert!(i < self.n);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.n && self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn intersect_with(&mut self, other: &RowMask) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    pub fn intersection(&self, other: &RowMask) -> RowMask {
        let mut m = self.clone();
        m.intersect_with(other);
        m
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(k, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(k * 64 + bit)
            })
        })
    }

    pub fn to_extension(&self) -> Extension {
        Extension::new(self.iter().collect(), self.n).expect("mask rows are sorted and in range")
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }
}
