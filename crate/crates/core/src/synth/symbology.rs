use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tables::{
    ean_g, ean_r, CODE128, CODE128_START_B, CODE128_STOP, CODE39, CODE93, CODE93_SHIFTS,
    CODE93_START_STOP, EAN_L, EAN_PARITY, ITF, WIDE,
};
use super::SynthError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SymbologyKind {
    Code39,
    Code93,
    Code128,
    UPCA,
    EAN13,
    ITF,
    Matrix2D,
}

impl SymbologyKind {
    pub const ALL: [SymbologyKind; 7] = [
        SymbologyKind::Code39,
        SymbologyKind::Code93,
        SymbologyKind::Code128,
        SymbologyKind::UPCA,
        SymbologyKind::EAN13,
        SymbologyKind::ITF,
        SymbologyKind::Matrix2D,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SymbologyKind::Code39 => "Code39",
            SymbologyKind::Code93 => "Code93",
            SymbologyKind::Code128 => "Code128",
            SymbologyKind::UPCA => "UPCA",
            SymbologyKind::EAN13 => "EAN13",
            SymbologyKind::ITF => "ITF",
            SymbologyKind::Matrix2D => "Matrix2D",
        }
    }

    pub fn is_linear(self) -> bool {
        self != SymbologyKind::Matrix2D
    }
}

impl fmt::Display for SymbologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SymbologyKind {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SymbologyKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| SynthError::UnknownSymbology(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Symbology {
    pub kind: SymbologyKind,
    pub payload: String,
}

/// One bar or space of a linear symbol.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Element {
    pub bar: bool,
    pub modules: u8,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModulePattern {
    /// Alternating bars and spaces, first and last a bar.
    Linear(Vec<Element>),
    /// Row-major `size x size` grid, `true` = dark.
    Matrix { size: usize, bits: Vec<bool> },
}

impl ModulePattern {
    /// Builds a linear pattern from run widths that alternate bar, space,
    /// bar, ..., merging nothing and checking the invariants.
    pub fn linear(widths: &[u8]) -> Result<Self, SynthError> {
        if widths.is_empty() || widths.len() % 2 == 0 {
            return Err(SynthError::Pattern(
                "a linear pattern must start and end with a bar".into(),
            ));
        }
        if widths.contains(&0) {
            return Err(SynthError::Pattern(
                "element widths must be at least one module".into(),
            ));
        }
        Ok(ModulePattern::Linear(
            widths
                .iter()
                .enumerate()
                .map(|(i, &m)| Element {
                    bar: i % 2 == 0,
                    modules: m,
                })
                .collect(),
        ))
    }

    /// Builds a linear pattern from a module bit string (`1` = bar).
    pub fn from_bits(bits: &str) -> Result<Self, SynthError> {
        let mut widths: Vec<u8> = Vec::new();
        let mut prev = None;
        for c in bits.chars() {
            let bar = c == '1';
            if prev == Some(bar) {
                *widths.last_mut().expect("non-empty") += 1;
            } else {
                if prev.is_none() && !bar {
                    return Err(SynthError::Pattern(
                        "a linear pattern must start with a bar".into(),
                    ));
                }
                widths.push(1);
                prev = Some(bar);
            }
        }
        Self::linear(&widths)
    }

    /// Total width in modules (grid side for a matrix).
    pub fn modules(&self) -> usize {
        match self {
            ModulePattern::Linear(e) => e.iter().map(|e| e.modules as usize).sum(),
            ModulePattern::Matrix { size, .. } => *size,
        }
    }

    pub fn widths(&self) -> Vec<u8> {
        match self {
            ModulePattern::Linear(e) => e.iter().map(|e| e.modules).collect(),
            ModulePattern::Matrix { .. } => Vec::new(),
        }
    }
}

fn digits_of(s: &str) -> Result<Vec<u32>, SynthError> {
    s.chars()
        .map(|c| {
            c.to_digit(10).ok_or(SynthError::InvalidCharacter {
                character: c,
                symbology: "numeric",
            })
        })
        .collect()
}

/// Standard modulo-10 check digit. EAN-13 takes 12 digits, UPC-A 11 and
/// ITF any number; the digit adjacent to the check digit weighs 3.
pub fn check_digit(kind: SymbologyKind, digits: &str) -> Result<u32, SynthError> {
    let d = digits_of(digits)?;
    let expected = match kind {
        SymbologyKind::EAN13 => Some(12),
        SymbologyKind::UPCA => Some(11),
        SymbologyKind::ITF => None,
        other => {
            return Err(SynthError::Payload(format!(
                "{other} has no modulo-10 check digit"
            )))
        }
    };
    if expected.is_some_and(|n| d.len() != n) || d.is_empty() {
        return Err(SynthError::Payload(format!(
            "{kind} check digit needs {} digits, got {}",
            expected.unwrap_or(1),
            d.len()
        )));
    }
    let sum: u32 = d
        .iter()
        .rev()
        .enumerate()
        .map(|(i, &v)| if i % 2 == 0 { 3 * v } else { v })
        .sum();
    Ok((10 - sum % 10) % 10)
}

fn nw_widths(pattern: &str) -> impl Iterator<Item = u8> + '_ {
    pattern.chars().map(|c| if c == 'w' { WIDE } else { 1 })
}

fn digit_widths(pattern: &str) -> impl Iterator<Item = u8> + '_ {
    pattern.bytes().map(|b| b - b'0')
}

/// Encoder for one symbology, looked up by name in a [`SymbologyRegistry`].
pub trait SymbologyEncoder: Send + Sync {
    fn kind(&self) -> SymbologyKind;

    /// Checks the payload against the symbology's character set and length.
    fn validate(&self, payload: &str) -> Result<(), SynthError>;

    fn encode(&self, payload: &str) -> Result<ModulePattern, SynthError>;

    fn random_payload(&self, rng: &mut ChaCha8Rng) -> String;
}

fn random_from(rng: &mut ChaCha8Rng, charset: &[char], len: usize) -> String {
    (0..len)
        .map(|_| charset[rng.random_range(0..charset.len())])
        .collect()
}

fn random_digits(rng: &mut ChaCha8Rng, len: usize) -> String {
    (0..len)
        .map(|_| char::from(b'0' + rng.random_range(0..10u8)))
        .collect()
}

pub struct Code39;

impl SymbologyEncoder for Code39 {
    fn kind(&self) -> SymbologyKind {
        SymbologyKind::Code39
    }

    fn validate(&self, payload: &str) -> Result<(), SynthError> {
        if payload.is_empty() {
            return Err(SynthError::Payload("Code39 payload is empty".into()));
        }
        for c in payload.chars() {
            if c == '*' || !CODE39.iter().any(|(k, _)| *k == c) {
                return Err(SynthError::InvalidCharacter {
                    character: c,
                    symbology: "Code39",
                });
            }
        }
        Ok(())
    }

    fn encode(&self, payload: &str) -> Result<ModulePattern, SynthError> {
        self.validate(payload)?;
        let mut widths = Vec::new();
        for (i, c) in std::iter::once('*')
            .chain(payload.chars())
            .chain(std::iter::once('*'))
            .enumerate()
        {
            if i > 0 {
                widths.push(1); // inter-character gap
            }
            let pattern = CODE39.iter().find(|(k, _)| *k == c).expect("validated").1;
            widths.extend(nw_widths(pattern));
        }
        ModulePattern::linear(&widths)
    }

    fn random_payload(&self, rng: &mut ChaCha8Rng) -> String {
        let charset: Vec<char> = CODE39
            .iter()
            .map(|(c, _)| *c)
            .filter(|&c| c != '*')
            .collect();
        let len = rng.random_range(4..=10);
        random_from(rng, &charset, len)
    }
}

pub struct Code93;

impl Code93 {
    fn value(c: char) -> Option<usize> {
        CODE93.iter().position(|(k, _)| *k == c)
    }

    /// Element widths of symbol value `v` (0..=46).
    pub fn pattern(v: usize) -> &'static str {
        if v < CODE93.len() {
            CODE93[v].1
        } else {
            CODE93_SHIFTS[v - CODE93.len()]
        }
    }

    /// The C and K check values for a sequence of symbol values.
    pub fn checks(values: &[usize]) -> (usize, usize) {
        let weighted = |vals: &[usize], max: usize| -> usize {
            vals.iter()
                .rev()
                .enumerate()
                .map(|(i, &v)| v * (i % max + 1))
                .sum::<usize>()
                % 47
        };
        let c = weighted(values, 20);
        let mut with_c = values.to_vec();
        with_c.push(c);
        (c, weighted(&with_c, 15))
    }
}

impl SymbologyEncoder for Code93 {
    fn kind(&self) -> SymbologyKind {
        SymbologyKind::Code93
    }

    fn validate(&self, payload: &str) -> Result<(), SynthError> {
        if payload.is_empty() {
            return Err(SynthError::Payload("Code93 payload is empty".into()));
        }
        match payload.chars().find(|&c| Self::value(c).is_none()) {
            Some(c) => Err(SynthError::InvalidCharacter {
                character: c,
                symbology: "Code93",
            }),
            None => Ok(()),
        }
    }

    fn encode(&self, payload: &str) -> Result<ModulePattern, SynthError> {
        self.validate(payload)?;
        let values: Vec<usize> = payload
            .chars()
            .map(|c| Self::value(c).expect("validated"))
            .collect();
        let (c, k) = Self::checks(&values);
        let mut widths: Vec<u8> = digit_widths(CODE93_START_STOP).collect();
        for v in values.iter().copied().chain([c, k]) {
            widths.extend(digit_widths(Self::pattern(v)));
        }
        widths.extend(digit_widths(CODE93_START_STOP));
        widths.push(1); // termination bar
        ModulePattern::linear(&widths)
    }

    fn random_payload(&self, rng: &mut ChaCha8Rng) -> String {
        let charset: Vec<char> = CODE93.iter().map(|(c, _)| *c).collect();
        let len = rng.random_range(4..=10);
        random_from(rng, &charset, len)
    }
}

/// Code 128 in code set B (printable ASCII).
pub struct Code128;

impl Code128 {
    /// Modulo-103 checksum of code-set-B symbol values.
    pub fn checksum(values: &[usize]) -> usize {
        (CODE128_START_B
            + values
                .iter()
                .enumerate()
                .map(|(i, &v)| (i + 1) * v)
                .sum::<usize>())
            % 103
    }
}

impl SymbologyEncoder for Code128 {
    fn kind(&self) -> SymbologyKind {
        SymbologyKind::Code128
    }

    fn validate(&self, payload: &str) -> Result<(), SynthError> {
        if payload.is_empty() {
            return Err(SynthError::Payload("Code128 payload is empty".into()));
        }
        match payload.chars().find(|c| !(' '..='\u{7f}').contains(c)) {
            Some(c) => Err(SynthError::InvalidCharacter {
                character: c,
                symbology: "Code128",
            }),
            None => Ok(()),
        }
    }

    fn encode(&self, payload: &str) -> Result<ModulePattern, SynthError> {
        self.validate(payload)?;
        let values: Vec<usize> = payload.chars().map(|c| c as usize - 32).collect();
        let check = Self::checksum(&values);
        let mut widths: Vec<u8> = Vec::new();
        for v in std::iter::once(CODE128_START_B)
            .chain(values.iter().copied())
            .chain([check])
        {
            widths.extend(digit_widths(CODE128[v]));
        }
        widths.extend(digit_widths(CODE128_STOP));
        ModulePattern::linear(&widths)
    }

    fn random_payload(&self, rng: &mut ChaCha8Rng) -> String {
        let len = rng.random_range(4..=12);
        (0..len)
            .map(|_| char::from(rng.random_range(32u8..127)))
            .collect()
    }
}

/// EAN-13 digit string (13 digits) to its 95-module bit string.
fn ean13_bits(digits: &[u32]) -> String {
    let mut s = String::from("101");
    let parity = EAN_PARITY[digits[0] as usize].as_bytes();
    for (i, &d) in digits[1..7].iter().enumerate() {
        if parity[i] == b'L' {
            s.push_str(EAN_L[d as usize]);
        } else {
            s.push_str(&ean_g(d as usize));
        }
    }
    s.push_str("01010");
    for &d in &digits[7..13] {
        s.push_str(&ean_r(d as usize));
    }
    s.push_str("101");
    s
}

/// Accepts `data_len` digits (check digit appended) or `data_len + 1`
/// digits whose last digit must be the correct check digit.
fn with_check(kind: SymbologyKind, payload: &str, data_len: usize) -> Result<Vec<u32>, SynthError> {
    let mut d = digits_of(payload).map_err(|e| match e {
        SynthError::InvalidCharacter { character, .. } => SynthError::InvalidCharacter {
            character,
            symbology: kind.name(),
        },
        other => other,
    })?;
    if d.len() == data_len {
        d.push(check_digit(kind, payload)?);
    } else if d.len() == data_len + 1 {
        let expected = check_digit(kind, &payload[..data_len])?;
        if d[data_len] != expected {
            return Err(SynthError::Payload(format!(
                "{kind} check digit is {}, expected {expected}",
                d[data_len]
            )));
        }
    } else {
        return Err(SynthError::Payload(format!(
            "{kind} takes {data_len} or {} digits, got {}",
            data_len + 1,
            d.len()
        )));
    }
    Ok(d)
}

pub struct Ean13;

impl SymbologyEncoder for Ean13 {
    fn kind(&self) -> SymbologyKind {
        SymbologyKind::EAN13
    }

    fn validate(&self, payload: &str) -> Result<(), SynthError> {
        with_check(SymbologyKind::EAN13, payload, 12).map(|_| ())
    }

    fn encode(&self, payload: &str) -> Result<ModulePattern, SynthError> {
        ModulePattern::from_bits(&ean13_bits(&with_check(SymbologyKind::EAN13, payload, 12)?))
    }

    fn random_payload(&self, rng: &mut ChaCha8Rng) -> String {
        random_digits(rng, 12)
    }
}

/// UPC-A, encoded as an EAN-13 with a leading zero.
pub struct UpcA;

impl SymbologyEncoder for UpcA {
    fn kind(&self) -> SymbologyKind {
        SymbologyKind::UPCA
    }

    fn validate(&self, payload: &str) -> Result<(), SynthError> {
        with_check(SymbologyKind::UPCA, payload, 11).map(|_| ())
    }

    fn encode(&self, payload: &str) -> Result<ModulePattern, SynthError> {
        let mut d = vec![0];
        d.extend(with_check(SymbologyKind::UPCA, payload, 11)?);
        ModulePattern::from_bits(&ean13_bits(&d))
    }

    fn random_payload(&self, rng: &mut ChaCha8Rng) -> String {
        random_digits(rng, 11)
    }
}

/// Interleaved 2 of 5 over an even number of digits.
pub struct Itf;

impl SymbologyEncoder for Itf {
    fn kind(&self) -> SymbologyKind {
        SymbologyKind::ITF
    }

    fn validate(&self, payload: &str) -> Result<(), SynthError> {
        if let Some(c) = payload.chars().find(|c| !c.is_ascii_digit()) {
            return Err(SynthError::InvalidCharacter {
                character: c,
                symbology: "ITF",
            });
        }
        if payload.is_empty() || payload.len() % 2 != 0 {
            return Err(SynthError::Payload(format!(
                "ITF needs a non-empty even number of digits, got {}",
                payload.len()
            )));
        }
        Ok(())
    }

    fn encode(&self, payload: &str) -> Result<ModulePattern, SynthError> {
        self.validate(payload)?;
        let d = digits_of(payload)?;
        let mut widths = vec![1u8, 1, 1, 1];
        for pair in d.chunks(2) {
            let (bars, spaces) = (
                ITF[pair[0] as usize].as_bytes(),
                ITF[pair[1] as usize].as_bytes(),
            );
            for k in 0..5 {
                widths.push(if bars[k] == b'w' { WIDE } else { 1 });
                widths.push(if spaces[k] == b'w' { WIDE } else { 1 });
            }
        }
        widths.extend([WIDE, 1, 1]);
        ModulePattern::linear(&widths)
    }

    fn random_payload(&self, rng: &mut ChaCha8Rng) -> String {
        let len = 2 * rng.random_range(3..=7);
        random_digits(rng, len)
    }
}

/// Two-dimensional placeholder: a solid L finder on the left and bottom
/// edges, alternating timing modules on the top and right edges, and a
/// payload-seeded interior.
pub struct Matrix2D;

impl Matrix2D {
    pub fn side(payload: &str) -> usize {
        10 + 2 * (payload.len() / 4).min(6)
    }
}

impl SymbologyEncoder for Matrix2D {
    fn kind(&self) -> SymbologyKind {
        SymbologyKind::Matrix2D
    }

    fn validate(&self, payload: &str) -> Result<(), SynthError> {
        if payload.is_empty() {
            return Err(SynthError::Payload("Matrix2D payload is empty".into()));
        }
        Ok(())
    }

    fn encode(&self, payload: &str) -> Result<ModulePattern, SynthError> {
        use rand::SeedableRng;
        self.validate(payload)?;
        let n = Self::side(payload);
        // FNV-1a of the payload seeds the interior
        let seed = payload.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x100_0000_01b3)
        });
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bits = vec![false; n * n];
        for y in 0..n {
            for x in 0..n {
                bits[y * n + x] = if x == 0 || y == n - 1 {
                    true
                } else if y == 0 {
                    x % 2 == 0
                } else if x == n - 1 {
                    y % 2 == 1
                } else {
                    rng.random_bool(0.5)
                };
            }
        }
        Ok(ModulePattern::Matrix { size: n, bits })
    }

    fn random_payload(&self, rng: &mut ChaCha8Rng) -> String {
        let charset: Vec<char> = ('A'..='Z').chain('0'..='9').collect();
        let len = rng.random_range(8..=24);
        random_from(rng, &charset, len)
    }
}

/// Name -> encoder lookup.
#[derive(Clone)]
pub struct SymbologyRegistry {
    encoders: BTreeMap<String, Arc<dyn SymbologyEncoder>>,
}

impl Default for SymbologyRegistry {
    fn default() -> Self {
        let mut r = Self {
            encoders: BTreeMap::new(),
        };
        r.register(Arc::new(Code39));
        r.register(Arc::new(Code93));
        r.register(Arc::new(Code128));
        r.register(Arc::new(UpcA));
        r.register(Arc::new(Ean13));
        r.register(Arc::new(Itf));
        r.register(Arc::new(Matrix2D));
        r
    }
}

impl SymbologyRegistry {
    pub fn register(&mut self, encoder: Arc<dyn SymbologyEncoder>) {
        self.encoders
            .insert(encoder.kind().name().to_string(), encoder);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn SymbologyEncoder>, SynthError> {
        self.encoders
            .get(name)
            .cloned()
            .ok_or_else(|| SynthError::UnknownSymbology(name.to_string()))
    }

    pub fn kinds(&self) -> Vec<SymbologyKind> {
        let mut k: Vec<SymbologyKind> = self.encoders.values().map(|e| e.kind()).collect();
        k.sort();
        k
    }
}

/// Encodes with the default registry.
pub fn encode(sym: &Symbology) -> Result<ModulePattern, SynthError> {
    SymbologyRegistry::default()
        .get(sym.kind.name())?
        .encode(&sym.payload)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_check_digits() {
        assert_eq!(
            check_digit(SymbologyKind::EAN13, "400638133393").unwrap(),
            1
        );
        assert_eq!(check_digit(SymbologyKind::UPCA, "03600029145").unwrap(), 2);
        assert_eq!(
            check_digit(SymbologyKind::EAN13, "000000000000").unwrap(),
            0
        );
        assert!(check_digit(SymbologyKind::EAN13, "40063813339x").is_err());
        assert!(check_digit(SymbologyKind::EAN13, "123").is_err());
    }

    #[test]
    fn code93_checks_may_use_shift_values() {
        // find payloads whose checks land on the shift symbols
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut hit = false;
        for _ in 0..2000 {
            let p = Code93.random_payload(&mut rng);
            let values: Vec<usize> = p.chars().map(|c| Code93::value(c).unwrap()).collect();
            let (c, k) = Code93::checks(&values);
            hit |= c >= 43 || k >= 43;
            assert!(Code93.encode(&p).is_ok());
        }
        assert!(hit);
    }

    #[test]
    fn code128_checksum_of_a() {
        assert_eq!(Code128::checksum(&[33]), 34);
    }

    #[test]
    fn ean13_is_95_modules() {
        let p = Ean13.encode("4006381333931").unwrap();
        assert_eq!(p.modules(), 95);
        assert!(Ean13.encode("4006381333932").is_err());
        assert_eq!(UpcA.encode("03600029145").unwrap().modules(), 95);
    }

    #[test]
    fn code39_symbol_count() {
        // start, A, B, stop: 4 x 9 elements and 3 gaps
        let p = Code39.encode("AB").unwrap();
        assert_eq!(p.widths().len(), 4 * 9 + 3);
        assert_eq!(p.modules(), 4 * (6 + 3 * WIDE as usize) + 3);
    }

    #[test]
    fn invalid_character_is_named() {
        let err = Code39.encode("ab").unwrap_err().to_string();
        assert!(err.contains("'a'"), "{err}");
        assert!(Itf.encode("123").is_err());
        assert!(Code128.encode("é").is_err());
    }

    #[test]
    fn itf_patterns_follow_weights() {
        // weights 1, 2, 4, 7 on the first four elements plus a parity element;
        // 4 + 7 = 11 stands for zero
        for (d, p) in ITF.iter().enumerate() {
            let wide: Vec<usize> = p
                .char_indices()
                .filter(|(_, c)| *c == 'w')
                .map(|(i, _)| i)
                .collect();
            let value: usize = wide
                .iter()
                .filter(|&&i| i < 4)
                .map(|&i| [1, 2, 4, 7][i])
                .sum();
            assert_eq!(value % 11, d, "digit {d}");
        }
    }

    #[test]
    fn matrix_is_deterministic_with_finder() {
        let a = Matrix2D.encode("HELLO123").unwrap();
        assert_eq!(a, Matrix2D.encode("HELLO123").unwrap());
        let ModulePattern::Matrix { size, bits } = a else {
            panic!()
        };
        assert!((0..size).all(|y| bits[y * size]));
        assert!((0..size).all(|x| bits[(size - 1) * size + x]));
    }

    #[test]
    fn pattern_invariants() {
        assert!(ModulePattern::linear(&[1, 1]).is_err());
        assert!(ModulePattern::linear(&[]).is_err());
        assert!(ModulePattern::from_bits("0101").is_err());
    }

    #[test]
    fn registry_lists_every_kind() {
        assert_eq!(
            SymbologyRegistry::default().kinds(),
            SymbologyKind::ALL.to_vec()
        );
        assert_eq!(
            "ean13".parse::<SymbologyKind>().unwrap(),
            SymbologyKind::EAN13
        );
    }
}
