//! Finite `{0,1}`-words: node addresses in the complete infinite binary tree.

use crate::{Error, Result};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use smallvec::SmallVec;
use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

/// Hard cap on word length. Deep enough for any run here (digital-tree depth
/// is logarithmic in the tree size with high probability); exceeding it is an
/// error, never a silent truncation.
pub const MAX_DEPTH: usize = 4096;

/// A finite bit string. Bit `i` lives at limb `i / 64`, position `i % 64`
/// (least significant first); unused high bits of the last limb are kept
/// zero so that equality and hashing work limb-wise.
///
/// The empty word is the root. Lexicographic `Ord` compares bit by bit and
/// places a proper prefix before its extensions.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Word {
    limbs: SmallVec<[u64; 1]>,
    len: u32,
}

impl Word {
    /// The empty word (the root address).
    pub fn root() -> Self {
        Self::default()
    }

    pub fn from_bits<I: IntoIterator<Item = u8>>(bits: I) -> Self {
        let mut w = Self::root();
        for b in bits {
            w.push(b);
        }
        w
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Bit at position `i` (0-based from the root), as 0 or 1.
    #[inline]
    pub fn bit(&self, i: usize) -> u8 {
        assert!(i < self.len(), "bit index {i} out of range for |u|={}", self.len);
        ((self.limbs[i >> 6] >> (i & 63)) & 1) as u8
    }

    /// Appends one bit. Panics beyond [`MAX_DEPTH`]; growth entry points
    /// check depth before extending, so this is a programmer-error guard.
    #[inline]
    pub fn push(&mut self, bit: u8) {
        assert!(self.len() < MAX_DEPTH, "word depth limit {MAX_DEPTH} exceeded");
        debug_assert!(bit <= 1);
        let i = self.len as usize;
        if i >> 6 == self.limbs.len() {
            self.limbs.push(0);
        }
        self.limbs[i >> 6] |= u64::from(bit) << (i & 63);
        self.len += 1;
    }

    /// Removes and returns the last bit.
    pub fn pop(&mut self) -> Option<u8> {
        if self.len == 0 {
            return None;
        }
        let i = self.len as usize - 1;
        let b = ((self.limbs[i >> 6] >> (i & 63)) & 1) as u8;
        self.limbs[i >> 6] &= !(1u64 << (i & 63));
        self.len -= 1;
        if self.limbs.len() > (self.len as usize + 63) >> 6 {
            self.limbs.pop();
        }
        Some(b)
    }

    /// The word with `bit` appended.
    pub fn child(&self, bit: u8) -> Word {
        let mut w = self.clone();
        w.push(bit);
        w
    }

    /// The word without its last bit; `None` for the root.
    pub fn parent(&self) -> Option<Word> {
        if self.is_empty() {
            return None;
        }
        let mut w = self.clone();
        w.pop();
        Some(w)
    }

    /// Concatenation `self + other`; length is additive.
    pub fn concat(&self, other: &Word) -> Word {
        let mut w = self.clone();
        for b in other.bits() {
            w.push(b);
        }
        w
    }

    pub fn bits(&self) -> impl Iterator<Item = u8> + '_ {
        (0..self.len()).map(move |i| self.bit(i))
    }

    pub fn count_ones(&self) -> u32 {
        self.limbs.iter().map(|l| l.count_ones()).sum()
    }

    pub(crate) fn limbs(&self) -> &[u64] {
        &self.limbs
    }

    /// Strict prefix order: `|self| < |other|` and bits agree on the first
    /// `|self|` positions.
    pub fn is_strict_prefix_of(&self, other: &Word) -> bool {
        self.len < other.len && self.agrees_on_own_length(other)
    }

    /// Reflexive prefix order.
    pub fn is_prefix_of(&self, other: &Word) -> bool {
        self.len <= other.len && self.agrees_on_own_length(other)
    }

    fn agrees_on_own_length(&self, other: &Word) -> bool {
        let full = self.len() >> 6;
        if self.limbs[..full] != other.limbs[..full] {
            return false;
        }
        let rem = self.len() & 63;
        if rem == 0 {
            return true;
        }
        let mask = (1u64 << rem) - 1;
        (self.limbs[full] ^ other.limbs[full]) & mask == 0
    }

    /// Longest common prefix of two words.
    pub fn longest_common_prefix(&self, other: &Word) -> Word {
        let k = self.common_prefix_len(other);
        Word::from_bits((0..k).map(|i| self.bit(i)))
    }

    /// Length of the longest common prefix.
    pub fn common_prefix_len(&self, other: &Word) -> usize {
        let n = self.len().min(other.len());
        for li in 0..(n + 63) >> 6 {
            let diff = self.limbs[li] ^ other.limbs[li];
            if diff != 0 {
                return ((li << 6) + diff.trailing_zeros() as usize).min(n);
            }
        }
        n
    }
}

impl Ord for Word {
    /// Dictionary order: first differing bit decides (`0 < 1`); if one word
    /// is a prefix of the other, the shorter comes first.
    fn cmp(&self, other: &Self) -> Ordering {
        let k = self.common_prefix_len(other);
        match (k < self.len(), k < other.len()) {
            (false, false) => Ordering::Equal,
            (false, true) => Ordering::Less,
            (true, false) => Ordering::Greater,
            (true, true) => self.bit(k).cmp(&other.bit(k)),
        }
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bits() {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word(\"{self}\")")
    }
}

impl FromStr for Word {
    type Err = Error;

    /// Parses the canonical textual form: a string over `{0,1}`, empty
    /// string meaning the root.
    fn from_str(s: &str) -> Result<Self> {
        if s.len() > MAX_DEPTH {
            return Err(Error::DepthOverflow(s.len(), MAX_DEPTH));
        }
        let mut w = Word::root();
        for c in s.chars() {
            match c {
                '0' => w.push(0),
                '1' => w.push(1),
                other => return Err(Error::BadWordChar(other)),
            }
        }
        Ok(w)
    }
}

impl Serialize for Word {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Word {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// An endless supply of routing bits. Digital growth pulls bits lazily, so a
/// source is charged only for the bits actually consumed.
pub trait BitSource {
    fn next_bit(&mut self) -> u8;
}

impl<F: FnMut() -> u8> BitSource for F {
    fn next_bit(&mut self) -> u8 {
        self()
    }
}

/// Replays a word's bits, continuing with a constant padding bit.
pub struct PaddedBits<'a> {
    word: &'a Word,
    pad: u8,
    pos: usize,
}

impl<'a> PaddedBits<'a> {
    pub fn new(word: &'a Word, pad: u8) -> Self {
        Self { word, pad, pos: 0 }
    }
}

impl BitSource for PaddedBits<'_> {
    fn next_bit(&mut self) -> u8 {
        let b = if self.pos < self.word.len() { self.word.bit(self.pos) } else { self.pad };
        self.pos += 1;
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Word {
        s.parse().unwrap()
    }

    #[test]
    fn prefix_order() {
        assert!(w("").is_strict_prefix_of(&w("0")));
        assert!(w("01").is_strict_prefix_of(&w("011")));
        assert!(!w("01").is_strict_prefix_of(&w("001")));
        assert!(!w("01").is_strict_prefix_of(&w("01")));
        assert!(w("01").is_prefix_of(&w("01")));
    }

    #[test]
    fn longest_common_prefix_cases() {
        assert_eq!(w("011").longest_common_prefix(&w("010")), w("01"));
        assert_eq!(w("1").longest_common_prefix(&w("0")), w(""));
        let u = w("0110");
        assert_eq!(u.longest_common_prefix(&u), u);
    }

    #[test]
    fn concat_length_additive() {
        let u = w("01");
        let v = w("110");
        let uv = u.concat(&v);
        assert_eq!(uv.len(), u.len() + v.len());
        assert_eq!(uv, w("01110"));
    }

    #[test]
    fn lexicographic_order() {
        let mut words: Vec<Word> = ["1", "00", "01", "0", "", "10"].iter().map(|s| w(s)).collect();
        words.sort();
        let expect: Vec<Word> = ["", "0", "00", "01", "1", "10"].iter().map(|s| w(s)).collect();
        assert_eq!(words, expect);
    }

    #[test]
    fn display_parse_roundtrip() {
        for s in ["", "0", "1", "0110100111"] {
            assert_eq!(w(s).to_string(), s);
        }
        assert!(matches!("02".parse::<Word>(), Err(Error::BadWordChar('2'))));
    }

    #[test]
    fn long_words_cross_limb_boundaries() {
        let mut u = Word::root();
        for i in 0..200 {
            u.push((i % 3 == 0) as u8);
        }
        assert_eq!(u.len(), 200);
        let mut v = u.clone();
        v.push(1);
        assert!(u.is_strict_prefix_of(&v));
        assert_eq!(u.common_prefix_len(&v), 200);
        let mut x = u.clone();
        for _ in 0..70 {
            x.pop();
        }
        assert_eq!(x.len(), 130);
        assert!(x.is_strict_prefix_of(&u));
    }

    #[test]
    #[should_panic(expected = "depth limit")]
    fn push_past_max_depth_panics() {
        let mut u = Word::root();
        for _ in 0..=MAX_DEPTH {
            u.push(0);
        }
    }

    #[test]
    fn padded_bits_replays_then_pads() {
        let u = w("10");
        let mut src = PaddedBits::new(&u, 0);
        let got: Vec<u8> = (0..5).map(|_| src.next_bit()).collect();
        assert_eq!(got, vec![1, 0, 0, 0, 0]);
    }
}
