use smallvec::SmallVec;

/// A subset of players `0..n`, stored as a fixed-width bitset so that equal
/// sets hash and compare equal regardless of construction order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coalition {
    words: SmallVec<[u64; 2]>,
}

fn words_for(players: usize) -> usize {
    players.div_ceil(64).max(1)
}

impl Coalition {
    pub fn empty(players: usize) -> Self {
        Coalition {
            words: SmallVec::from_elem(0, words_for(players)),
        }
    }

    pub fn full(players: usize) -> Self {
        let mut c = Coalition::empty(players);
        for i in 0..players {
            c.insert(i);
        }
        c
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(players: usize, members: I) -> Self {
        let mut c = Coalition::empty(players);
        for i in members {
            c.insert(i);
        }
        c
    }

    /// Coalition whose membership is the low `players` bits of `mask`.
    pub fn from_mask(players: usize, mask: u64) -> Self {
        let mut c = Coalition::empty(players);
        c.words[0] = mask;
        c
    }

    pub fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, i: usize) {
        self.words[i / 64] &= !(1 << (i % 64));
    }

    pub fn contains(&self, i: usize) -> bool {
        self.words.get(i / 64).is_some_and(|w| w >> (i % 64) & 1 == 1)
    }

    pub fn with(&self, i: usize) -> Self {
        let mut c = self.clone();
        c.insert(i);
        c
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let tz = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(wi * 64 + tz)
            })
        })
    }
}
