//! Published element tables of the supported linear symbologies.

/// Code 39 characters and their bar/space pattern (`n` narrow, `w` wide),
/// starting with a bar.
pub const CODE39: [(char, &str); 44] = [
    ('0', "nnnwwnwnn"),
    ('1', "wnnwnnnnw"),
    ('2', "nnwwnnnnw"),
    ('3', "wnwwnnnnn"),
    ('4', "nnnwwnnnw"),
    ('5', "wnnwwnnnn"),
    ('6', "nnwwwnnnn"),
    ('7', "nnnwnnwnw"),
    ('8', "wnnwnnwnn"),
    ('9', "nnwwnnwnn"),
    ('A', "wnnnnwnnw"),
    ('B', "nnwnnwnnw"),
    ('C', "wnwnnwnnn"),
    ('D', "nnnnwwnnw"),
    ('E', "wnnnwwnnn"),
    ('F', "nnwnwwnnn"),
    ('G', "nnnnnwwnw"),
    ('H', "wnnnnwwnn"),
    ('I', "nnwnnwwnn"),
    ('J', "nnnnwwwnn"),
    ('K', "wnnnnnnww"),
    ('L', "nnwnnnnww"),
    ('M', "wnwnnnnwn"),
    ('N', "nnnnwnnww"),
    ('O', "wnnnwnnwn"),
    ('P', "nnwnwnnwn"),
    ('Q', "nnnnnnwww"),
    ('R', "wnnnnnwwn"),
    ('S', "nnwnnnwwn"),
    ('T', "nnnnwnwwn"),
    ('U', "wwnnnnnnw"),
    ('V', "nwwnnnnnw"),
    ('W', "wwwnnnnnn"),
    ('X', "nwnnwnnnw"),
    ('Y', "wwnnwnnnn"),
    ('Z', "nwwnwnnnn"),
    ('-', "nwnnnnwnw"),
    ('.', "wwnnnnwnn"),
    (' ', "nwwnnnwnn"),
    ('*', "nwnnwnwnn"),
    ('$', "nwnwnwnnn"),
    ('/', "nwnwnnnwn"),
    ('+', "nwnnnwnwn"),
    ('%', "nnnwnwnwn"),
];

/// Wide element width in modules for Code 39 and ITF.
pub const WIDE: u8 = 3;

/// Code 93 characters in value order (0..=42) with element widths
/// `bar space bar space bar space`.
pub const CODE93: [(char, &str); 43] = [
    ('0', "131112"),
    ('1', "111213"),
    ('2', "111312"),
    ('3', "111411"),
    ('4', "121113"),
    ('5', "121212"),
    ('6', "121311"),
    ('7', "111114"),
    ('8', "131211"),
    ('9', "141111"),
    ('A', "211113"),
    ('B', "211212"),
    ('C', "211311"),
    ('D', "221112"),
    ('E', "221211"),
    ('F', "231111"),
    ('G', "112113"),
    ('H', "112212"),
    ('I', "112311"),
    ('J', "122112"),
    ('K', "132111"),
    ('L', "111123"),
    ('M', "111222"),
    ('N', "111321"),
    ('O', "121122"),
    ('P', "131121"),
    ('Q', "212112"),
    ('R', "212211"),
    ('S', "211122"),
    ('T', "211221"),
    ('U', "221121"),
    ('V', "222111"),
    ('W', "112122"),
    ('X', "112221"),
    ('Y', "122121"),
    ('Z', "123111"),
    ('-', "121131"),
    ('.', "311112"),
    (' ', "311211"),
    ('$', "321111"),
    ('/', "112131"),
    ('+', "113121"),
    ('%', "211131"),
];

/// Code 93 shift characters (values 43..=46), used only by full ASCII.
pub const CODE93_SHIFTS: [&str; 4] = ["121221", "312111", "311121", "122211"];
pub const CODE93_START_STOP: &str = "111141";

/// Code 128 symbol values 0..=105; widths `bar space bar space bar space`.
pub const CODE128: [&str; 106] = [
    "212222", "222122", "222221", "121223", "121322", "131222", "122213", "122312", "132212",
    "221213", "221312", "231212", "112232", "122132", "122231", "113222", "123122", "123221",
    "223211", "221132", "221231", "213212", "223112", "312131", "311222", "321122", "321221",
    "312212", "322112", "322211", "212123", "212321", "232121", "111323", "131123", "131321",
    "112313", "132113", "132311", "211313", "231113", "231311", "112133", "112331", "132131",
    "113123", "113321", "133121", "313121", "211331", "231131", "213113", "213311", "213131",
    "311123", "311321", "331121", "312113", "312311", "332111", "314111", "221411", "431111",
    "111224", "111422", "121124", "121421", "141122", "141221", "112214", "112412", "122114",
    "122411", "142112", "142211", "241211", "221114", "413111", "241112", "134111", "111242",
    "121142", "121241", "114212", "124112", "124211", "411212", "421112", "421211", "212141",
    "214121", "412121", "111143", "111341", "131141", "114113", "114311", "411113", "411311",
    "113141", "114131", "311141", "411131", "211412", "211214", "211232",
];
pub const CODE128_START_B: usize = 104;
pub const CODE128_STOP: &str = "2331112";

/// EAN/UPC left-hand odd-parity (L) codes; R codes are their complement
/// and G codes the reversed R codes.
pub const EAN_L: [&str; 10] = [
    "0001101", "0011001", "0010011", "0111101", "0100011", "0110001", "0101111", "0111011",
    "0110111", "0001011",
];

/// L/G parity of digits 2..=7 selected by the first EAN-13 digit.
pub const EAN_PARITY: [&str; 10] = [
    "LLLLLL", "LLGLGG", "LLGGLG", "LLGGGL", "LGLLGG", "LGGLLG", "LGGGLL", "LGLGLG", "LGLGGL",
    "LGGLGL",
];

/// ITF digit patterns, five elements with two wide.
pub const ITF: [&str; 10] = [
    "nnwwn", "wnnnw", "nwnnw", "wwnnn", "nnwnw", "wnwnn", "nwwnn", "nnnww", "wnnwn", "nwnwn",
];

pub fn ean_r(digit: usize) -> String {
    EAN_L[digit]
        .chars()
        .map(|c| if c == '0' { '1' } else { '0' })
        .collect()
}

pub fn ean_g(digit: usize) -> String {
    ean_r(digit).chars().rev().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn widths(s: &str) -> Vec<u32> {
        s.bytes().map(|b| (b - b'0') as u32).collect()
    }

    #[test]
    fn code39_structure() {
        let mut seen = HashSet::new();
        for (c, p) in CODE39 {
            assert_eq!(p.len(), 9, "{c}");
            assert_eq!(p.matches('w').count(), 3, "{c}");
            let wide_bars = p.chars().step_by(2).filter(|&e| e == 'w').count();
            // all but the four punctuation symbols have two wide bars
            let expected = if "$/+%".contains(c) { 0 } else { 2 };
            assert_eq!(wide_bars, expected, "{c}");
            assert!(seen.insert(p), "{c} duplicated");
        }
    }

    #[test]
    fn code93_structure() {
        let mut seen = HashSet::new();
        for p in CODE93
            .iter()
            .map(|(_, p)| *p)
            .chain(CODE93_SHIFTS)
            .chain([CODE93_START_STOP])
        {
            let w = widths(p);
            assert_eq!(w.iter().sum::<u32>(), 9, "{p}");
            assert!(w.iter().all(|&x| (1..=4).contains(&x)));
            assert!(seen.insert(p), "{p} duplicated");
        }
    }

    #[test]
    fn code128_structure() {
        let mut seen = HashSet::new();
        for (v, p) in CODE128.iter().enumerate() {
            let w = widths(p);
            assert_eq!(w.iter().sum::<u32>(), 11, "value {v}");
            assert_eq!((w[0] + w[2] + w[4]) % 2, 0, "value {v} bar parity");
            assert!(seen.insert(*p), "value {v} duplicated");
        }
        assert_eq!(widths(CODE128_STOP).iter().sum::<u32>(), 13);
    }

    #[test]
    fn ean_structure() {
        let mut all = HashSet::new();
        for d in 0..10 {
            let (l, r, g) = (EAN_L[d].to_string(), ean_r(d), ean_g(d));
            assert!(l.starts_with('0') && l.ends_with('1'));
            assert!(r.starts_with('1') && r.ends_with('0'));
            assert_eq!(l.matches('1').count() % 2, 1, "L codes have odd parity");
            assert_eq!(g.matches('1').count() % 2, 0, "G codes have even parity");
            assert!(all.insert(l) && all.insert(r) && all.insert(g));
        }
        assert_eq!(EAN_PARITY.iter().collect::<HashSet<_>>().len(), 10);
    }

    #[test]
    fn itf_structure() {
        assert_eq!(ITF.iter().collect::<HashSet<_>>().len(), 10);
        assert!(ITF.iter().all(|p| p.matches('w').count() == 2));
    }
}
