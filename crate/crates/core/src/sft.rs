//! Subshifts of finite type: alphabet, transition matrix, word enumeration.
//!
//! Symbols are `0..m-1` internally; user-facing strings print them 1-based.
//! Words of a fixed length are packed into a `u64` base-`m` integer with the
//! first symbol most significant, so numeric order equals lexicographic
//! order and prefix/suffix extraction is integer arithmetic.

use crate::error::{Error, Result};

/// Largest alphabet the packed representation and bitmask rows accept.
pub const MAX_ALPHABET: usize = 64;

/// A mixing subshift of finite type on `m` symbols.
///
/// Construction validates that the 0/1 transition matrix has no empty row or
/// column and is primitive, and precomputes the primitivity exponent `p0`
/// together with a lexicographically minimal bridge word for every symbol
/// pair.
#[derive(Debug, Clone)]
pub struct Sft {
    m: usize,
    /// Row bitmasks: bit j of `rows[i]` set iff the transition i -> j is allowed.
    rows: Vec<u64>,
    p0: usize,
    /// Bridge words indexed by `i * m + j`, each of length `p0`.
    bridges: Vec<Vec<u8>>,
}

impl Sft {
    /// Builds the subshift from 0/1 adjacency rows.
    pub fn new(adjacency: &[Vec<u8>]) -> Result<Self> {
        let m = adjacency.len();
        if m == 0 || m > MAX_ALPHABET {
            return Err(Error::AlphabetTooLarge {
                size: m,
                max: MAX_ALPHABET,
            });
        }
        let mut rows = vec![0u64; m];
        for (i, row) in adjacency.iter().enumerate() {
            if row.len() != m {
                return Err(Error::DegenerateRow { index: i });
            }
            for (j, &e) in row.iter().enumerate() {
                if e != 0 {
                    rows[i] |= 1 << j;
                }
            }
            if rows[i] == 0 {
                return Err(Error::DegenerateRow { index: i });
            }
        }
        for j in 0..m {
            if !rows.iter().any(|r| r & (1 << j) != 0) {
                return Err(Error::DegenerateColumn { index: j });
            }
        }
        let p0 = primitivity_exponent(&rows, m)?;
        let bridges = bridge_table(&rows, m, p0);
        Ok(Sft {
            m,
            rows,
            p0,
            bridges,
        })
    }

    /// Full shift on `m` symbols.
    pub fn full(m: usize) -> Result<Self> {
        Sft::new(&vec![vec![1u8; m]; m])
    }

    /// Golden mean shift: two symbols, transition 2 -> 2 forbidden.
    pub fn golden_mean() -> Self {
        Sft::new(&[vec![1, 1], vec![1, 0]]).expect("golden mean matrix is primitive")
    }

    pub fn alphabet_size(&self) -> usize {
        self.m
    }

    /// Smallest p with all entries of A^p positive.
    pub fn primitivity_exponent(&self) -> usize {
        self.p0
    }

    #[inline]
    pub fn edge(&self, from: u8, to: u8) -> bool {
        self.rows[from as usize] & (1 << to) != 0
    }

    /// Bitmask of successors of `from`.
    #[inline]
    pub fn successors(&self, from: u8) -> u64 {
        self.rows[from as usize]
    }

    /// Lexicographically smallest word w of length p0 making i.w.j admissible.
    pub fn bridge(&self, i: u8, j: u8) -> &[u8] {
        &self.bridges[i as usize * self.m + j as usize]
    }

    pub fn admissible(&self, word: &[u8]) -> bool {
        if word.iter().any(|&s| s as usize >= self.m) {
            return false;
        }
        word.windows(2).all(|p| self.edge(p[0], p[1]))
    }

    /// Number of admissible words of length n, saturating at u128::MAX.
    pub fn word_count(&self, n: usize) -> u128 {
        if n == 0 {
            return 1;
        }
        let mut v = vec![1u128; self.m];
        for _ in 1..n {
            let mut next = vec![0u128; self.m];
            for i in 0..self.m {
                let mut mask = self.rows[i];
                while mask != 0 {
                    let j = mask.trailing_zeros() as usize;
                    mask &= mask - 1;
                    next[i] = next[i].saturating_add(v[j]);
                }
            }
            v = next;
        }
        v.iter().fold(0u128, |a, &x| a.saturating_add(x))
    }

    /// Visits every admissible word of length n in lexicographic order.
    pub fn for_each_word<F: FnMut(&[u8])>(&self, n: usize, mut f: F) {
        let mut word = Vec::with_capacity(n);
        self.walk(&mut word, n, &mut f);
    }

    fn walk<F: FnMut(&[u8])>(&self, word: &mut Vec<u8>, n: usize, f: &mut F) {
        if word.len() == n {
            f(word);
            return;
        }
        let mut mask = match word.last() {
            Some(&p) => self.rows[p as usize],
            None => (1u64 << self.m.min(63)) - 1 + if self.m == 64 { 1 << 63 } else { 0 },
        };
        while mask != 0 {
            let s = mask.trailing_zeros() as u8;
            mask &= mask - 1;
            word.push(s);
            self.walk(word, n, f);
            word.pop();
        }
    }

    /// Continues the lexicographic walk below a fixed admissible prefix.
    pub fn for_each_word_with_prefix<F: FnMut(&[u8])>(&self, prefix: &[u8], n: usize, mut f: F) {
        debug_assert!(self.admissible(prefix) && prefix.len() <= n);
        let mut word = Vec::with_capacity(n);
        word.extend_from_slice(prefix);
        self.walk(&mut word, n, &mut f);
    }

    /// Lazy iterator over admissible words of length n, lexicographic.
    /// Fine for small enumerations; hot paths use `for_each_word`.
    pub fn words(&self, n: usize) -> impl Iterator<Item = Vec<u8>> + '_ {
        let mut out: Vec<Vec<u8>> = Vec::new();
        self.for_each_word(n, |w| out.push(w.to_vec()));
        out.into_iter()
    }
}

/// Prints a word with 1-based symbols, e.g. [0, 1, 0] -> "121".
pub fn word_string(word: &[u8]) -> String {
    if word.is_empty() {
        return "(empty)".to_string();
    }
    word.iter()
        .map(|&s| {
            let d = s as u32 + 1;
            char::from_digit(d % 36, 36).unwrap_or('?')
        })
        .collect()
}

fn primitivity_exponent(rows: &[u64], m: usize) -> Result<usize> {
    let full: u64 = if m == 64 {
        u64::MAX
    } else {
        (1u64 << m) - 1
    };
    // Wielandt bound on the primitivity exponent.
    let cap = (m - 1) * (m - 1) + 1;
    let mut power = rows.to_vec();
    for p in 1..=cap {
        if power.iter().all(|&r| r == full) {
            return Ok(p);
        }
        power = bool_mat_mul(&power, rows, m);
    }
    Err(Error::NotPrimitive { tried: cap })
}

fn bool_mat_mul(a: &[u64], b: &[u64], m: usize) -> Vec<u64> {
    let mut out = vec![0u64; m];
    for i in 0..m {
        let mut mask = a[i];
        while mask != 0 {
            let k = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            out[i] |= b[k];
        }
    }
    out
}

fn bridge_table(rows: &[u64], m: usize, p0: usize) -> Vec<Vec<u8>> {
    // reach[e][s] = bitmask of symbols reachable from s in exactly e edges
    let mut reach: Vec<Vec<u64>> = Vec::with_capacity(p0 + 2);
    let mut ident = vec![0u64; m];
    for (s, r) in ident.iter_mut().enumerate() {
        *r = 1 << s;
    }
    reach.push(ident);
    for _ in 0..=p0 {
        let last = reach.last().unwrap();
        reach.push(bool_mat_mul(last, rows, m));
    }
    let mut table = Vec::with_capacity(m * m);
    for i in 0..m as u8 {
        for j in 0..m as u8 {
            let mut w = Vec::with_capacity(p0);
            let mut prev = i;
            for t in 1..=p0 {
                let remaining = p0 - t + 1;
                let mut picked = None;
                for s in 0..m as u8 {
                    if rows[prev as usize] & (1 << s) != 0
                        && reach[remaining][s as usize] & (1 << j) != 0
                    {
                        picked = Some(s);
                        break;
                    }
                }
                let s = picked.expect("primitive matrix guarantees a bridge");
                w.push(s);
                prev = s;
            }
            table.push(w);
        }
    }
    table
}

/// Sorted, packed list of all admissible words of one length.
///
/// Lexicographic enumeration packs in increasing numeric order, so ranks are
/// recovered by binary search.
#[derive(Debug, Clone)]
pub struct WordSet {
    len: usize,
    m: usize,
    packed: Vec<u64>,
    /// Powers of m up to `len`, for prefix and suffix arithmetic.
    pow: Vec<u64>,
}

impl WordSet {
    /// Materializes all admissible words of length `len`, refusing above `cap`.
    pub fn build(sft: &Sft, len: usize, cap: u64) -> Result<Self> {
        let count = sft.word_count(len);
        if count > cap as u128 {
            return Err(Error::EnumerationCap {
                requested: count,
                cap,
            });
        }
        let m = sft.alphabet_size();
        let mut pow = Vec::with_capacity(len + 1);
        let mut p = 1u64;
        for _ in 0..=len {
            pow.push(p);
            p = p.checked_mul(m as u64).unwrap_or(u64::MAX);
        }
        if *pow.last().unwrap() == u64::MAX {
            return Err(Error::AlphabetTooLarge {
                size: m,
                max: MAX_ALPHABET,
            });
        }
        let mut packed = Vec::with_capacity(count as usize);
        sft.for_each_word(len, |w| packed.push(pack(w, m)));
        Ok(WordSet {
            len,
            m,
            packed,
            pow,
        })
    }

    pub fn len_words(&self) -> usize {
        self.packed.len()
    }

    pub fn word_len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn packed_at(&self, rank: usize) -> u64 {
        self.packed[rank]
    }

    #[inline]
    pub fn rank_of(&self, packed: u64) -> Option<usize> {
        self.packed.binary_search(&packed).ok()
    }

    /// Writes word `rank` into `buf` (length `len`).
    pub fn write_word(&self, rank: usize, buf: &mut [u8]) {
        unpack(self.packed[rank], self.len, self.m, buf);
    }

    pub fn word_at(&self, rank: usize) -> Vec<u8> {
        let mut buf = vec![0u8; self.len];
        self.write_word(rank, &mut buf);
        buf
    }

    /// m^len, the modulus that extracts a full-length suffix.
    #[inline]
    pub fn modulus(&self) -> u64 {
        self.pow[self.len]
    }

    /// Packed prefix after dropping the trailing `drop` symbols.
    #[inline]
    pub fn prefix_packed(&self, packed: u64, drop: usize) -> u64 {
        packed / self.pow[drop]
    }

    /// Packed suffix of length `keep`.
    #[inline]
    pub fn suffix_packed(&self, packed: u64, keep: usize) -> u64 {
        packed % self.pow[keep]
    }
}

#[inline]
pub fn pack(word: &[u8], m: usize) -> u64 {
    let mut p = 0u64;
    for &s in word {
        p = p * m as u64 + s as u64;
    }
    p
}

pub fn unpack(mut packed: u64, len: usize, m: usize, buf: &mut [u8]) {
    for i in (0..len).rev() {
        buf[i] = (packed % m as u64) as u8;
        packed /= m as u64;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_shift_has_exponent_one() {
        let s = Sft::full(2).unwrap();
        assert_eq!(s.primitivity_exponent(), 1);
        assert_eq!(s.alphabet_size(), 2);
    }

    #[test]
    fn golden_mean_has_exponent_two() {
        let s = Sft::golden_mean();
        assert_eq!(s.primitivity_exponent(), 2);
    }

    #[test]
    fn zero_row_is_rejected() {
        let e = Sft::new(&[vec![1, 1], vec![0, 0]]).unwrap_err();
        assert_eq!(e, Error::DegenerateRow { index: 1 });
    }

    #[test]
    fn zero_column_is_rejected() {
        let e = Sft::new(&[vec![1, 0], vec![1, 0]]).unwrap_err();
        assert_eq!(e, Error::DegenerateColumn { index: 1 });
    }

    #[test]
    fn permutation_matrix_is_not_primitive() {
        let e = Sft::new(&[vec![0, 1, 0], vec![0, 0, 1], vec![1, 0, 0]]).unwrap_err();
        assert_eq!(e, Error::NotPrimitive { tried: 5 });
    }

    #[test]
    fn word_counts_match_enumeration_up_to_ten() {
        let golden = Sft::golden_mean();
        for n in 0..=10 {
            let mut seen = 0u128;
            golden.for_each_word(n, |w| {
                assert!(golden.admissible(w));
                seen += 1;
            });
            assert_eq!(seen, golden.word_count(n));
        }
    }

    #[test]
    fn golden_mean_counts_are_fibonacci() {
        // counts 2, 3, 5, 8, ... for n = 1, 2, 3, 4
        let golden = Sft::golden_mean();
        assert_eq!(golden.word_count(0), 1);
        assert_eq!(golden.word_count(1), 2);
        assert_eq!(golden.word_count(3), 5);
        assert_eq!(golden.word_count(10), 144);
    }

    #[test]
    fn full_shift_count_is_power() {
        let s = Sft::full(2).unwrap();
        assert_eq!(s.word_count(3), 8);
    }

    #[test]
    fn empty_word_is_enumerated_once() {
        let s = Sft::full(3).unwrap();
        let all: Vec<_> = s.words(0).collect();
        assert_eq!(all, vec![Vec::<u8>::new()]);
    }

    #[test]
    fn enumeration_is_lexicographic() {
        let s = Sft::golden_mean();
        let words: Vec<_> = s.words(3).collect();
        let strings: Vec<String> = words.iter().map(|w| word_string(w)).collect();
        assert_eq!(strings, vec!["111", "112", "121", "211", "212"]);
    }

    #[test]
    fn bridge_words_are_minimal() {
        let full = Sft::full(2).unwrap();
        assert_eq!(full.bridge(0, 1), &[0]);
        let golden = Sft::golden_mean();
        assert_eq!(golden.bridge(1, 1), &[0, 0]);
        for i in 0..2u8 {
            for j in 0..2u8 {
                let mut w = vec![i];
                w.extend_from_slice(golden.bridge(i, j));
                w.push(j);
                assert!(golden.admissible(&w));
            }
        }
    }

    #[test]
    fn word_set_ranks_roundtrip() {
        let s = Sft::golden_mean();
        let ws = WordSet::build(&s, 5, 1 << 20).unwrap();
        assert_eq!(ws.len_words() as u128, s.word_count(5));
        for r in 0..ws.len_words() {
            let w = ws.word_at(r);
            assert_eq!(ws.rank_of(pack(&w, 2)), Some(r));
        }
    }

    #[test]
    fn word_set_refuses_over_cap() {
        let s = Sft::full(2).unwrap();
        let e = WordSet::build(&s, 20, 100).unwrap_err();
        assert!(matches!(e, Error::EnumerationCap { .. }));
    }

    #[test]
    fn prefix_suffix_arithmetic() {
        let s = Sft::full(3).unwrap();
        let ws = WordSet::build(&s, 4, 1 << 10).unwrap();
        let w = [2u8, 0, 1, 2];
        let p = pack(&w, 3);
        assert_eq!(ws.prefix_packed(p, 1), pack(&[2, 0, 1], 3));
        assert_eq!(ws.suffix_packed(p, 3), pack(&[0, 1, 2], 3));
    }
}
