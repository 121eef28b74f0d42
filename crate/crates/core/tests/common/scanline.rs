//! Reference scanline reader: run lengths of the centre row, module width
//! from the narrowest run, and table inversion per symbology with checksum
//! verification. Knows nothing about the encoder beyond the public tables.

use std::collections::HashMap;

use uhrbar::synth::tables::{
    CODE128, CODE128_STOP, CODE39, CODE93, CODE93_SHIFTS, CODE93_START_STOP, EAN_L, EAN_PARITY, ITF,
};
use uhrbar::synth::SymbologyKind;
use uhrbar::GrayImage;

/// Bar/space module counts of the centre row, starting with a bar.
pub fn module_runs(img: &GrayImage) -> Result<Vec<usize>, String> {
    let row = img.row(img.height() / 2);
    let dark: Vec<bool> = row.iter().map(|&v| v < 128).collect();
    let first = dark
        .iter()
        .position(|&d| d)
        .ok_or("no bars on the centre row")?;
    let last = dark.iter().rposition(|&d| d).unwrap();
    let mut runs = Vec::new();
    let mut i = first;
    while i <= last {
        let j = (i..=last).find(|&j| dark[j] != dark[i]).unwrap_or(last + 1);
        runs.push(j - i);
        i = j;
    }
    let unit = *runs.iter().min().unwrap();
    runs.iter()
        .map(|&r| {
            if r % unit == 0 {
                Ok(r / unit)
            } else {
                Err(format!("run {r} is not a multiple of {unit}"))
            }
        })
        .collect()
}

fn digits(runs: &[usize]) -> String {
    runs.iter().map(|r| char::from(b'0' + *r as u8)).collect()
}

fn invert<'a>(pairs: impl Iterator<Item = (&'a str, usize)>) -> HashMap<String, usize> {
    pairs.map(|(k, v)| (k.to_string(), v)).collect()
}

fn code39(runs: &[usize]) -> Result<String, String> {
    let table: HashMap<String, char> = CODE39.iter().map(|(c, p)| (p.to_string(), *c)).collect();
    if (runs.len() + 1) % 10 != 0 {
        return Err(format!("{} runs", runs.len()));
    }
    let mut out = String::new();
    for (i, chunk) in runs.chunks(10).enumerate() {
        if chunk.len() == 10 && chunk[9] != 1 {
            return Err("inter-character gap is not narrow".into());
        }
        let nw: String = chunk[..9]
            .iter()
            .map(|&r| match r {
                1 => 'n',
                3 => 'w',
                _ => '?',
            })
            .collect();
        let c = *table.get(&nw).ok_or(format!("unknown pattern {nw}"))?;
        let edge = i == 0 || i == runs.len() / 10;
        if edge != (c == '*') {
            return Err(format!("misplaced character {c}"));
        }
        if !edge {
            out.push(c);
        }
    }
    Ok(out)
}

fn code93(runs: &[usize]) -> Result<String, String> {
    let table = invert(
        CODE93
            .iter()
            .map(|(_, p)| *p)
            .chain(CODE93_SHIFTS)
            .enumerate()
            .map(|(v, p)| (p, v)),
    );
    if runs.len() < 6 * 4 + 1 || (runs.len() - 1) % 6 != 0 || *runs.last().unwrap() != 1 {
        return Err("bad Code 93 framing".into());
    }
    let groups: Vec<String> = runs[..runs.len() - 1].chunks(6).map(digits).collect();
    if groups[0] != CODE93_START_STOP || groups[groups.len() - 1] != CODE93_START_STOP {
        return Err("missing start/stop".into());
    }
    let values: Vec<usize> = groups[1..groups.len() - 1]
        .iter()
        .map(|g| table.get(g).copied().ok_or(format!("unknown {g}")))
        .collect::<Result<_, _>>()?;
    let n = values.len();
    let weigh = |vals: &[usize], wrap: usize| {
        let mut sum = 0;
        let mut weight = 1;
        for &v in vals.iter().rev() {
            sum += v * weight;
            weight = if weight == wrap { 1 } else { weight + 1 };
        }
        sum % 47
    };
    if weigh(&values[..n - 2], 20) != values[n - 2] || weigh(&values[..n - 1], 15) != values[n - 1]
    {
        return Err("Code 93 check mismatch".into());
    }
    values[..n - 2]
        .iter()
        .map(|&v| {
            CODE93
                .get(v)
                .map(|e| e.0)
                .ok_or("shift in payload".to_string())
        })
        .collect()
}

fn code128(runs: &[usize]) -> Result<String, String> {
    let table = invert(CODE128.iter().enumerate().map(|(v, p)| (*p, v)));
    if runs.len() < 7 + 12
        || (runs.len() - 7) % 6 != 0
        || digits(&runs[runs.len() - 7..]) != CODE128_STOP
    {
        return Err("bad Code 128 framing".into());
    }
    let values: Vec<usize> = runs[..runs.len() - 7]
        .chunks(6)
        .map(|c| table.get(&digits(c)).copied().ok_or("unknown symbol"))
        .collect::<Result<_, _>>()?;
    if values[0] != 104 {
        return Err("not a code set B start".into());
    }
    let n = values.len();
    let mut sum = values[0];
    for (i, &v) in values[1..n - 1].iter().enumerate() {
        sum += (i + 1) * v;
    }
    if sum % 103 != values[n - 1] {
        return Err("Code 128 checksum mismatch".into());
    }
    Ok(values[1..n - 1]
        .iter()
        .map(|&v| char::from(v as u8 + 32))
        .collect())
}

/// Standard GTIN check digit by direct summation.
pub fn gtin_check(data: &[u32]) -> u32 {
    let sum: u32 = data
        .iter()
        .rev()
        .enumerate()
        .map(|(i, &d)| if i % 2 == 0 { 3 * d } else { d })
        .sum();
    (10 - sum % 10) % 10
}

fn ean13(runs: &[usize]) -> Result<String, String> {
    let mut bits = String::new();
    for (i, &r) in runs.iter().enumerate() {
        bits.extend(std::iter::repeat_n(if i % 2 == 0 { '1' } else { '0' }, r));
    }
    if bits.len() != 95 || &bits[..3] != "101" || &bits[45..50] != "01010" || &bits[92..] != "101" {
        return Err(format!("bad EAN framing ({} modules)", bits.len()));
    }
    let complement = |s: &str| -> String {
        s.chars()
            .map(|c| if c == '0' { '1' } else { '0' })
            .collect()
    };
    let mut parity = String::new();
    let mut out = Vec::new();
    for k in 0..6 {
        let code = &bits[3 + 7 * k..10 + 7 * k];
        if let Some(d) = EAN_L.iter().position(|l| *l == code) {
            parity.push('L');
            out.push(d as u32);
        } else if let Some(d) = EAN_L
            .iter()
            .position(|l| complement(l).chars().rev().collect::<String>() == code)
        {
            parity.push('G');
            out.push(d as u32);
        } else {
            return Err(format!("unknown left code {code}"));
        }
    }
    let first = EAN_PARITY
        .iter()
        .position(|p| *p == parity)
        .ok_or("unknown parity")? as u32;
    out.insert(0, first);
    for k in 0..6 {
        let code = &bits[50 + 7 * k..57 + 7 * k];
        out.push(
            EAN_L
                .iter()
                .position(|l| complement(l) == code)
                .ok_or(format!("unknown right code {code}"))? as u32,
        );
    }
    if gtin_check(&out[..12]) != out[12] {
        return Err("EAN check digit mismatch".into());
    }
    Ok(out
        .iter()
        .map(|d| char::from_digit(*d, 10).unwrap())
        .collect())
}

fn itf(runs: &[usize]) -> Result<String, String> {
    if runs.len() < 7
        || runs[..4] != [1, 1, 1, 1]
        || runs[runs.len() - 3..] != [3, 1, 1]
        || (runs.len() - 7) % 10 != 0
    {
        return Err("bad ITF framing".into());
    }
    let nw = |r: &usize| match r {
        1 => 'n',
        3 => 'w',
        _ => '?',
    };
    let mut out = String::new();
    for chunk in runs[4..runs.len() - 3].chunks(10) {
        let bars: String = chunk.iter().step_by(2).map(nw).collect();
        let spaces: String = chunk.iter().skip(1).step_by(2).map(nw).collect();
        for p in [bars, spaces] {
            out.push(char::from(
                b'0' + ITF
                    .iter()
                    .position(|q| *q == p)
                    .ok_or(format!("unknown ITF {p}"))? as u8,
            ));
        }
    }
    Ok(out)
}

/// Decoded human-readable payload including any check digit.
pub fn decode(kind: SymbologyKind, img: &GrayImage) -> Result<String, String> {
    let runs = module_runs(img)?;
    match kind {
        SymbologyKind::Code39 => code39(&runs),
        SymbologyKind::Code93 => code93(&runs),
        SymbologyKind::Code128 => code128(&runs),
        SymbologyKind::EAN13 => ean13(&runs),
        SymbologyKind::UPCA => {
            let s = ean13(&runs)?;
            s.strip_prefix('0')
                .map(str::to_string)
                .ok_or("UPC-A must start with 0".into())
        }
        SymbologyKind::ITF => itf(&runs),
        SymbologyKind::Matrix2D => Err("not a linear symbology".into()),
    }
}
