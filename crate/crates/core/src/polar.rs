//! Polar code construction, Kronecker-power encoding and the outer CRC.
//!
//! Bits are carried as `u8` values in `{0, 1}`. A message word `u` has
//! length `N`; its frozen positions are zero and its information positions,
//! taken in ascending index order, hold the `K`-bit information word: the
//! payload first, the `r` CRC bits last.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The 1024-entry 5G NR polar reliability sequence, least reliable first.
pub const NR_RELIABILITY_SEQUENCE: &str = include_str!("../data/nr_reliability_1024.txt");

/// A CRC generator polynomial over GF(2).
///
/// `taps` holds the coefficients of `D^0 .. D^(degree-1)`; the leading
/// `D^degree` term is implicit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CrcPoly {
    degree: u32,
    taps: u64,
}

impl CrcPoly {
    /// `D^16 + D^12 + D^5 + 1`, the 16-bit CRC of 3GPP TS 38.212.
    pub const NR16: CrcPoly = CrcPoly { degree: 16, taps: 0x1021 };
    /// `D^11 + D^10 + D^9 + D^5 + 1`.
    pub const NR11: CrcPoly = CrcPoly { degree: 11, taps: 0x621 };
    /// `D^6 + D^5 + 1`.
    pub const NR6: CrcPoly = CrcPoly { degree: 6, taps: 0x21 };

    pub fn new(degree: u32, taps: u64) -> Result<Self> {
        if degree == 0 || degree > 63 {
            return Err(Error::InvalidCode(format!("CRC degree {degree} outside 1..=63")));
        }
        if taps >> degree != 0 {
            return Err(Error::InvalidCode(format!(
                "CRC taps {taps:#x} exceed degree {degree}"
            )));
        }
        Ok(Self { degree, taps })
    }

    /// Builds a polynomial from its full binary form, leading term included
    /// (`0x11021` for the 16-bit NR CRC).
    pub fn from_full(full: u64) -> Result<Self> {
        if full < 2 {
            return Err(Error::InvalidCode(format!("CRC polynomial {full:#x} has degree 0")));
        }
        let degree = 63 - full.leading_zeros();
        Self::new(degree, full & ((1u64 << degree) - 1))
    }

    pub fn degree(&self) -> usize {
        self.degree as usize
    }

    pub fn taps(&self) -> u64 {
        self.taps
    }

    pub fn full(&self) -> u64 {
        (1u64 << self.degree) | self.taps
    }

    fn mask(&self) -> u64 {
        (1u64 << self.degree) - 1
    }

    /// Remainder of `bits(D) * D^r` modulo the generator, MSB-first.
    pub fn remainder(&self, bits: &[u8]) -> u64 {
        let top = self.degree - 1;
        let mut reg = 0u64;
        for &b in bits {
            let feedback = ((reg >> top) & 1) ^ u64::from(b & 1);
            reg = (reg << 1) & self.mask();
            if feedback == 1 {
                reg ^= self.taps;
            }
        }
        reg
    }
}

impl Default for CrcPoly {
    fn default() -> Self {
        Self::NR16
    }
}

impl fmt::Display for CrcPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.full())
    }
}

impl FromStr for CrcPoly {
    type Err = Error;

    /// Accepts `nr16`, `nr11`, `nr6`, or a full hexadecimal polynomial such
    /// as `0x11021`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nr16" | "crc16" => Ok(Self::NR16),
            "nr11" | "crc11" => Ok(Self::NR11),
            "nr6" | "crc6" => Ok(Self::NR6),
            other => {
                let hex = other.trim_start_matches("0x");
                let full = u64::from_str_radix(hex, 16)
                    .map_err(|e| Error::InvalidCode(format!("bad CRC polynomial {s:?}: {e}")))?;
                Self::from_full(full)
            }
        }
    }
}

impl Serialize for CrcPoly {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for CrcPoly {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Where the frozen set comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrozenSource {
    /// Indices ordered from least to most reliable. Entries `>= N` are
    /// skipped, so a sequence built for a larger mother code can be reused.
    Reliability(Vec<usize>),
    /// The frozen set itself.
    Frozen(Vec<usize>),
}

impl FrozenSource {
    /// The shipped 5G NR reliability sequence.
    pub fn nr() -> Self {
        Self::Reliability(parse_index_list(NR_RELIABILITY_SEQUENCE).expect("bundled sequence is well formed"))
    }

    pub fn reliability_file(path: &Path) -> Result<Self> {
        Ok(Self::Reliability(read_index_file(path)?))
    }

    pub fn frozen_file(path: &Path) -> Result<Self> {
        Ok(Self::Frozen(read_index_file(path)?))
    }
}

/// Parses whitespace- or comma-separated indices; `#` starts a comment.
pub fn parse_index_list(text: &str) -> std::result::Result<Vec<usize>, String> {
    text.lines()
        .map(|line| line.split('#').next().unwrap_or(""))
        .flat_map(|line| line.split(|c: char| c == ',' || c.is_whitespace()))
        .filter(|tok| !tok.is_empty())
        .map(|tok| tok.parse::<usize>().map_err(|e| format!("{tok:?}: {e}")))
        .collect()
}

fn read_index_file(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)?;
    parse_index_list(&text).map_err(|msg| Error::Parse {
        path: path.to_path_buf(),
        msg,
    })
}

/// A CRC-concatenated polar code `P(N, K)`; the CRC bits are counted in `K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolarCode {
    n: usize,
    k: usize,
    frozen_mask: Vec<bool>,
    info_set: Vec<usize>,
    frozen_set: Vec<usize>,
    crc: CrcPoly,
}

impl PolarCode {
    /// Builds `P(2^n, k)`. With a reliability order the `k` most reliable
    /// indices carry information.
    pub fn build(n: usize, k: usize, source: &FrozenSource, crc: CrcPoly) -> Result<Self> {
        if n == 0 || n > 24 {
            return Err(Error::InvalidCode(format!("n = {n} outside 1..=24")));
        }
        let len = 1usize << n;
        if k == 0 || k > len {
            return Err(Error::InvalidCode(format!("K = {k} outside 1..={len}")));
        }
        if crc.degree() >= k {
            return Err(Error::InvalidCode(format!(
                "CRC degree {} leaves no payload in K = {k}",
                crc.degree()
            )));
        }

        let mut frozen_mask = vec![true; len];
        match source {
            FrozenSource::Reliability(order) => {
                let restricted: Vec<usize> = order.iter().copied().filter(|&i| i < len).collect();
                let mut seen = vec![false; len];
                for &i in &restricted {
                    if std::mem::replace(&mut seen[i], true) {
                        return Err(Error::InvalidCode(format!("index {i} repeated in reliability order")));
                    }
                }
                if restricted.len() < len {
                    return Err(Error::InvalidCode(format!(
                        "reliability order covers {} of {len} indices",
                        restricted.len()
                    )));
                }
                for &i in &restricted[len - k..] {
                    frozen_mask[i] = false;
                }
            }
            FrozenSource::Frozen(frozen) => {
                if frozen.len() != len - k {
                    return Err(Error::InvalidCode(format!(
                        "frozen set has {} entries, expected {}",
                        frozen.len(),
                        len - k
                    )));
                }
                frozen_mask.iter_mut().for_each(|f| *f = false);
                for &i in frozen {
                    if i >= len {
                        return Err(Error::InvalidCode(format!("frozen index {i} >= N = {len}")));
                    }
                    if std::mem::replace(&mut frozen_mask[i], true) {
                        return Err(Error::InvalidCode(format!("frozen index {i} repeated")));
                    }
                }
            }
        }

        let info_set = (0..len).filter(|&i| !frozen_mask[i]).collect();
        let frozen_set = (0..len).filter(|&i| frozen_mask[i]).collect();
        Ok(Self {
            n,
            k,
            frozen_mask,
            info_set,
            frozen_set,
            crc,
        })
    }

    /// `P(2^n, k)` from the 5G NR reliability sequence with the 16-bit CRC.
    pub fn nr(n: usize, k: usize) -> Result<Self> {
        Self::build(n, k, &FrozenSource::nr(), CrcPoly::NR16)
    }

    /// Number of PE stages, `log2 N`.
    pub fn stages(&self) -> usize {
        self.n
    }

    /// Block length `N`.
    pub fn len(&self) -> usize {
        self.frozen_mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frozen_mask.is_empty()
    }

    /// Information bits `K`, CRC included.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn crc(&self) -> CrcPoly {
        self.crc
    }

    pub fn crc_len(&self) -> usize {
        self.crc.degree()
    }

    pub fn payload_len(&self) -> usize {
        self.k - self.crc.degree()
    }

    pub fn rate(&self) -> f64 {
        self.k as f64 / self.len() as f64
    }

    pub fn info_set(&self) -> &[usize] {
        &self.info_set
    }

    pub fn frozen_set(&self) -> &[usize] {
        &self.frozen_set
    }

    pub fn frozen_mask(&self) -> &[bool] {
        &self.frozen_mask
    }

    pub fn is_frozen(&self, i: usize) -> bool {
        self.frozen_mask[i]
    }

    /// Appends the CRC remainder to `payload`, giving a `K`-bit word.
    pub fn crc_attach(&self, payload: &[u8]) -> Result<Vec<u8>> {
        check_len(self.payload_len(), payload.len())?;
        let rem = self.crc.remainder(payload);
        let r = self.crc_len();
        let mut word = Vec::with_capacity(self.k);
        word.extend(payload.iter().map(|b| b & 1));
        word.extend((0..r).rev().map(|j| ((rem >> j) & 1) as u8));
        Ok(word)
    }

    /// True iff the `K`-bit word is divisible by the CRC polynomial.
    pub fn crc_verify(&self, word: &[u8]) -> Result<bool> {
        check_len(self.k, word.len())?;
        Ok(self.crc_check_unchecked(word))
    }

    pub(crate) fn crc_check_unchecked(&self, word: &[u8]) -> bool {
        let split = self.payload_len();
        let rem = self.crc.remainder(&word[..split]);
        let r = self.crc_len();
        word[split..]
            .iter()
            .enumerate()
            .all(|(j, &b)| u64::from(b & 1) == (rem >> (r - 1 - j)) & 1)
    }

    /// Scatters a `K`-bit information word into an `N`-bit message word.
    pub fn message_from_info(&self, info: &[u8]) -> Result<Vec<u8>> {
        check_len(self.k, info.len())?;
        let mut u = vec![0u8; self.len()];
        for (&pos, &b) in self.info_set.iter().zip(info) {
            u[pos] = b & 1;
        }
        Ok(u)
    }

    /// Gathers the information positions of an `N`-bit message word.
    pub fn info_bits(&self, u: &[u8]) -> Vec<u8> {
        self.info_set.iter().map(|&i| u[i]).collect()
    }

    /// `x = u G^{⊗n}` over GF(2).
    pub fn encode(&self, u: &[u8]) -> Result<Vec<u8>> {
        check_len(self.len(), u.len())?;
        if let Some(i) = self.frozen_set.iter().copied().find(|&i| u[i] != 0) {
            return Err(Error::FrozenViolation(i));
        }
        let mut x = u.to_vec();
        polar_transform(&mut x);
        Ok(x)
    }

    /// Parity-check matrix of the CRC over the `K` information bits.
    ///
    /// Row `c`, column `j` is bit `c` of `D^(K-1-j) mod g(D)`, so a word
    /// passes [`crc_verify`](Self::crc_verify) iff every row has even parity
    /// over its support. Returned as one column-index list per row.
    pub fn crc_parity_checks(&self) -> Vec<Vec<usize>> {
        let r = self.crc_len();
        let mut rows = vec![Vec::new(); r];
        // D^(K-1-j) mod g, iterated from j = K-1 (D^0) downwards.
        let mut power = 1u64;
        for j in (0..self.k).rev() {
            for (c, row) in rows.iter_mut().enumerate() {
                if (power >> c) & 1 == 1 {
                    row.push(j);
                }
            }
            let carry = (power >> (r - 1)) & 1;
            power = (power << 1) & self.crc.mask();
            if carry == 1 {
                power ^= self.crc.taps();
            }
        }
        rows.iter_mut().for_each(|row| row.sort_unstable());
        rows
    }
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, actual })
    }
}

/// In-place butterfly for `G^{⊗n}`: stage `s` XORs index `i + 2^s` into `i`.
pub fn polar_transform(bits: &mut [u8]) {
    let len = bits.len();
    debug_assert!(len.is_power_of_two());
    let mut half = 1;
    while half < len {
        for block in (0..len).step_by(2 * half) {
            for i in block..block + half {
                bits[i] ^= bits[i + half];
            }
        }
        half *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p85() -> PolarCode {
        PolarCode::build(3, 5, &FrozenSource::Frozen(vec![0, 1, 2]), CrcPoly::from_full(0b111).unwrap()).unwrap()
    }

    /// Dense `G^{⊗n}` over GF(2), built by repeated Kronecker products.
    fn kron_matrix(n: usize) -> Vec<Vec<u8>> {
        let g = [[1u8, 0], [1, 1]];
        let mut m = vec![vec![1u8]];
        for _ in 0..n {
            let sz = m.len();
            let mut next = vec![vec![0u8; 2 * sz]; 2 * sz];
            for (a, grow) in g.iter().enumerate() {
                for (b, &gv) in grow.iter().enumerate() {
                    for i in 0..sz {
                        for j in 0..sz {
                            next[a * sz + i][b * sz + j] = gv & m[i][j];
                        }
                    }
                }
            }
            m = next;
        }
        m
    }

    fn dense_encode(u: &[u8], g: &[Vec<u8>]) -> Vec<u8> {
        (0..u.len())
            .map(|j| (0..u.len()).fold(0u8, |acc, i| acc ^ (u[i] & g[i][j])))
            .collect()
    }

    /// Plain long division over GF(2); returns the `r` remainder bits.
    fn long_division(bits: &[u8], full: u64) -> Vec<u8> {
        let deg = (63 - full.leading_zeros()) as usize;
        let g: Vec<u8> = (0..=deg).rev().map(|j| ((full >> j) & 1) as u8).collect();
        let mut work = bits.to_vec();
        for i in 0..=work.len().saturating_sub(g.len()) {
            if work.len() >= g.len() && work[i] == 1 {
                for (j, &gj) in g.iter().enumerate() {
                    work[i + j] ^= gj;
                }
            }
        }
        work[work.len() - deg..].to_vec()
    }

    fn bits_of(value: u64, width: usize) -> Vec<u8> {
        (0..width).rev().map(|j| ((value >> j) & 1) as u8).collect()
    }

    #[test]
    fn fig1_code_info_set() {
        assert_eq!(p85().info_set(), &[3, 4, 5, 6, 7]);
    }

    #[test]
    fn no_frozen_bits() {
        let code = PolarCode::build(1, 2, &FrozenSource::Frozen(vec![]), CrcPoly::from_full(0b11).unwrap()).unwrap();
        assert_eq!(code.info_set(), &[0, 1]);
        assert!(code.frozen_set().is_empty());
    }

    #[test]
    fn nr_128_64_frozen_set() {
        // Independently selected: the 64 least reliable indices below 128.
        let expected: Vec<usize> = vec![
            0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23, 24, 25, 26, 27,
            28, 29, 32, 33, 34, 35, 36, 37, 38, 39, 40, 41, 42, 44, 48, 49, 50, 52, 56, 64, 65, 66, 67, 68, 69, 70,
            72, 73, 74, 76, 80, 81, 82, 84, 96, 97,
        ];
        let code = PolarCode::nr(7, 64).unwrap();
        assert_eq!(code.frozen_set(), expected.as_slice());
        assert_eq!(code.payload_len(), 48);
        assert_eq!(code.info_set().len() + code.frozen_set().len(), 128);
    }

    #[test]
    fn build_errors() {
        let nr = FrozenSource::nr();
        assert!(PolarCode::build(0, 1, &nr, CrcPoly::NR6).is_err());
        assert!(PolarCode::build(3, 0, &nr, CrcPoly::NR6).is_err());
        assert!(PolarCode::build(3, 9, &nr, CrcPoly::NR6).is_err());
        assert!(PolarCode::build(4, 16, &nr, CrcPoly::NR16).is_err());
        assert!(PolarCode::build(4, 8, &FrozenSource::Reliability(vec![0, 1, 2]), CrcPoly::NR6).is_err());
        assert!(PolarCode::build(3, 5, &FrozenSource::Frozen(vec![0, 1]), CrcPoly::NR6).is_err());
        assert!(PolarCode::build(3, 5, &FrozenSource::Frozen(vec![0, 1, 1]), CrcPoly::from_full(3).unwrap()).is_err());
    }

    #[test]
    fn build_is_deterministic() {
        assert_eq!(PolarCode::nr(7, 64).unwrap(), PolarCode::nr(7, 64).unwrap());
    }

    #[test]
    fn crc_zero_payload() {
        let code = PolarCode::nr(7, 64).unwrap();
        assert_eq!(code.crc_attach(&[0; 48]).unwrap(), vec![0u8; 64]);
    }

    #[test]
    fn crc_matches_long_division() {
        let code = PolarCode::nr(7, 64).unwrap();
        let mut payload = vec![0u8; 48];
        payload[7] = 1; // 0x01 followed by zero bytes
        let word = code.crc_attach(&payload).unwrap();
        // Frozen from a separate long-division script.
        assert_eq!(&word[48..], bits_of(0x45a0, 16).as_slice());
        let mut shifted = payload.clone();
        shifted.extend([0; 16]);
        assert_eq!(long_division(&shifted, 0x11021), bits_of(0x45a0, 16));
    }

    #[test]
    fn crc_verify_random_word_matches_long_division() {
        let code = PolarCode::nr(7, 64).unwrap();
        let word = bits_of(0xa218_8432_21fc_3e56, 64);
        assert_eq!(long_division(&word, 0x11021), bits_of(0xf501, 16));
        assert!(!code.crc_verify(&word).unwrap());
    }

    #[test]
    fn crc_length_errors() {
        let code = PolarCode::nr(7, 64).unwrap();
        assert!(code.crc_attach(&[0; 47]).is_err());
        assert!(code.crc_verify(&[0; 63]).is_err());
    }

    #[test]
    fn encode_unit_vector() {
        let code = p85();
        let mut u = vec![0u8; 8];
        u[7] = 1;
        assert_eq!(code.encode(&u).unwrap(), vec![1; 8]);
        assert_eq!(code.encode(&[0; 8]).unwrap(), vec![0; 8]);
        u[1] = 1;
        assert!(matches!(code.encode(&u), Err(Error::FrozenViolation(1))));
    }

    #[test]
    fn encode_matches_dense_kronecker() {
        let g = kron_matrix(3);
        for word in 0u32..256 {
            let mut u = bits_of(u64::from(word), 8);
            let dense = dense_encode(&u, &g);
            polar_transform(&mut u);
            assert_eq!(u, dense);
        }
    }

    #[test]
    fn parity_checks_exhaustive_small_crc() {
        // D^4 + D + 1 over K = 8: H w = 0 exactly for the CRC-valid words.
        let code = PolarCode::build(4, 8, &FrozenSource::nr(), CrcPoly::from_full(0b10011).unwrap()).unwrap();
        let rows = code.crc_parity_checks();
        for word in 0u64..256 {
            let w = bits_of(word, 8);
            let syndrome_zero = rows.iter().all(|row| row.iter().fold(0, |a, &j| a ^ w[j]) == 0);
            let divisible = long_division(&w, 0b10011).iter().all(|&b| b == 0);
            assert_eq!(syndrome_zero, divisible, "word {word:08b}");
            assert_eq!(syndrome_zero, code.crc_verify(&w).unwrap());
        }
    }

    #[test]
    fn crc_poly_parsing() {
        assert_eq!("nr16".parse::<CrcPoly>().unwrap(), CrcPoly::NR16);
        assert_eq!("0x11021".parse::<CrcPoly>().unwrap(), CrcPoly::NR16);
        assert_eq!(CrcPoly::NR16.to_string(), "0x11021");
        assert!("0x1".parse::<CrcPoly>().is_err());
    }

    proptest! {
        #[test]
        fn encode_is_linear(a in prop::collection::vec(0u8..2, 64), b in prop::collection::vec(0u8..2, 64)) {
            let code = PolarCode::nr(7, 64).unwrap();
            let ua = code.message_from_info(&a).unwrap();
            let ub = code.message_from_info(&b).unwrap();
            let sum: Vec<u8> = ua.iter().zip(&ub).map(|(x, y)| x ^ y).collect();
            let xa = code.encode(&ua).unwrap();
            let xb = code.encode(&ub).unwrap();
            let xs = code.encode(&sum).unwrap();
            prop_assert!(xs.iter().zip(xa.iter().zip(&xb)).all(|(s, (p, q))| *s == p ^ q));
        }

        #[test]
        fn transform_is_involution(bits in prop::collection::vec(0u8..2, 32)) {
            let mut x = bits.clone();
            polar_transform(&mut x);
            polar_transform(&mut x);
            prop_assert_eq!(x, bits);
        }

        #[test]
        fn crc_round_trip_and_single_flip(payload in prop::collection::vec(0u8..2, 48), flip in 0usize..64) {
            let code = PolarCode::nr(7, 64).unwrap();
            let mut word = code.crc_attach(&payload).unwrap();
            prop_assert!(code.crc_verify(&word).unwrap());
            word[flip] ^= 1;
            prop_assert!(!code.crc_verify(&word).unwrap());
        }
    }
}
