//! Adaptive range coding of signed integer symbols.
//!
//! Symbols are zigzag-mapped to unsigned values. Values below 16 are coded
//! directly; larger values up to magnitude 2^15 are coded as a bit-length
//! class followed by the bits under the leading one; larger magnitudes use an
//! escape symbol and a fixed 24-bit remainder. Only the class alphabet is
//! modelled adaptively, the trailing bits are coded at probability 1/2.
//!
//! Stream layout: LEB128 symbol count, then the range coder bytes (absent for
//! an empty sequence).

use thiserror::Error;

use super::quant::MAX_SYMBOL_MAGNITUDE;

const DIRECT_SYMBOLS: u32 = 16;
const FIRST_CLASS_BITS: u32 = 4;
const LAST_CLASS_BITS: u32 = 16;
const ESCAPE: usize = (DIRECT_SYMBOLS + LAST_CLASS_BITS - FIRST_CLASS_BITS + 1) as usize;
const ALPHABET: usize = ESCAPE + 1;
/// Magnitudes above this are escape coded.
pub const ESCAPE_MAGNITUDE: i64 = 1 << 15;
const ESCAPE_BITS: u32 = 24;

const TOP: u32 = 1 << 24;
const FREQ_INCREMENT: u32 = 24;
const FREQ_LIMIT: u32 = 1 << 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EntropyError {
    #[error("symbol {0} exceeds the coder's dynamic range")]
    SymbolOutOfRange(i64),
    #[error("stream declares {found} symbols, caller expects {expected}")]
    LengthMismatch { expected: usize, found: u64 },
    #[error("stream ended before all symbols were decoded")]
    Truncated,
    #[error("{0} unread bytes after the last symbol")]
    TrailingBytes(usize),
    #[error("invalid coder state: {0}")]
    Invalid(&'static str),
}

#[inline]
fn zigzag(s: i32) -> u32 {
    ((s << 1) ^ (s >> 31)) as u32
}

#[inline]
fn unzigzag(z: u32) -> i32 {
    ((z >> 1) as i32) ^ -((z & 1) as i32)
}

/// Adaptive frequency table over the class alphabet.
#[derive(Debug, Clone)]
struct FrequencyModel {
    freq: [u32; ALPHABET],
    total: u32,
}

impl FrequencyModel {
    fn new() -> Self {
        FrequencyModel {
            freq: [1; ALPHABET],
            total: ALPHABET as u32,
        }
    }

    fn interval(&self, symbol: usize) -> (u32, u32) {
        let start = self.freq[..symbol].iter().sum();
        (start, self.freq[symbol])
    }

    /// Symbol whose cumulative interval contains `target`.
    fn lookup(&self, target: u32) -> (usize, u32, u32) {
        let mut start = 0;
        for (symbol, &f) in self.freq.iter().enumerate() {
            if target < start + f {
                return (symbol, start, f);
            }
            start += f;
        }
        unreachable!("target below total")
    }

    fn update(&mut self, symbol: usize) {
        self.freq[symbol] += FREQ_INCREMENT;
        self.total += FREQ_INCREMENT;
        if self.total > FREQ_LIMIT {
            self.total = 0;
            for f in &mut self.freq {
                *f = (*f + 1) / 2;
                self.total += *f;
            }
        }
    }
}

struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl RangeEncoder {
    fn new(out: Vec<u8>) -> Self {
        RangeEncoder {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            out,
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut temp = self.cache;
            loop {
                self.out.push(temp.wrapping_add(carry));
                temp = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.cache_size += 1;
        self.low = u64::from((self.low as u32) << 8);
    }

    fn normalize(&mut self) {
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    fn encode(&mut self, start: u32, size: u32, total: u32) {
        let r = self.range / total;
        self.low += u64::from(r) * u64::from(start);
        self.range = r * size;
        self.normalize();
    }

    fn encode_bits(&mut self, value: u32, bits: u32) {
        for i in (0..bits).rev() {
            self.range >>= 1;
            if (value >> i) & 1 == 1 {
                self.low += u64::from(self.range);
            }
            self.normalize();
        }
    }

    fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    range: u32,
    code: u32,
}

impl<'a> RangeDecoder<'a> {
    fn new(data: &'a [u8]) -> Result<Self, EntropyError> {
        let mut dec = RangeDecoder {
            data,
            pos: 0,
            range: u32::MAX,
            code: 0,
        };
        if dec.next_byte()? != 0 {
            return Err(EntropyError::Invalid("first coder byte must be zero"));
        }
        for _ in 0..4 {
            dec.code = (dec.code << 8) | u32::from(dec.next_byte()?);
        }
        Ok(dec)
    }

    fn next_byte(&mut self) -> Result<u8, EntropyError> {
        let b = *self.data.get(self.pos).ok_or(EntropyError::Truncated)?;
        self.pos += 1;
        Ok(b)
    }

    fn normalize(&mut self) -> Result<(), EntropyError> {
        while self.range < TOP {
            self.range <<= 8;
            self.code = (self.code << 8) | u32::from(self.next_byte()?);
        }
        Ok(())
    }

    fn decode_symbol(&mut self, model: &FrequencyModel) -> Result<usize, EntropyError> {
        let r = self.range / model.total;
        let target = self.code / r;
        if target >= model.total {
            return Err(EntropyError::Invalid("code outside the model interval"));
        }
        let (symbol, start, size) = model.lookup(target);
        self.code -= r * start;
        self.range = r * size;
        self.normalize()?;
        Ok(symbol)
    }

    fn decode_bits(&mut self, bits: u32) -> Result<u32, EntropyError> {
        let mut value = 0;
        for _ in 0..bits {
            self.range >>= 1;
            let bit = if self.code >= self.range {
                self.code -= self.range;
                1
            } else {
                0
            };
            value = (value << 1) | bit;
            self.normalize()?;
        }
        Ok(value)
    }
}

fn write_leb128(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7F) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

fn read_leb128(data: &[u8]) -> Result<(u64, usize), EntropyError> {
    let mut v = 0u64;
    for (i, &byte) in data.iter().enumerate().take(10) {
        v |= u64::from(byte & 0x7F) << (7 * i);
        if byte & 0x80 == 0 {
            return Ok((v, i + 1));
        }
    }
    Err(if data.len() < 10 {
        EntropyError::Truncated
    } else {
        EntropyError::Invalid("overlong length prefix")
    })
}

/// Range codes `symbols` with a fresh adaptive model.
pub fn entropy_encode(symbols: &[i32]) -> Result<Vec<u8>, EntropyError> {
    let mut out = Vec::with_capacity(symbols.len() / 2 + 8);
    write_leb128(&mut out, symbols.len() as u64);
    if symbols.is_empty() {
        return Ok(out);
    }
    let mut model = FrequencyModel::new();
    let mut enc = RangeEncoder::new(out);
    for &s in symbols {
        let magnitude = i64::from(s).abs();
        if magnitude > MAX_SYMBOL_MAGNITUDE {
            return Err(EntropyError::SymbolOutOfRange(i64::from(s)));
        }
        let (symbol, extra, extra_bits) = if magnitude > ESCAPE_MAGNITUDE {
            let rest = (magnitude - ESCAPE_MAGNITUDE - 1) as u32;
            (ESCAPE, (rest << 1) | u32::from(s < 0), ESCAPE_BITS)
        } else {
            let z = zigzag(s);
            if z < DIRECT_SYMBOLS {
                (z as usize, 0, 0)
            } else {
                let bits = 31 - z.leading_zeros();
                let class = (DIRECT_SYMBOLS + bits - FIRST_CLASS_BITS) as usize;
                (class, z - (1 << bits), bits)
            }
        };
        let (start, size) = model.interval(symbol);
        enc.encode(start, size, model.total);
        model.update(symbol);
        enc.encode_bits(extra, extra_bits);
    }
    Ok(enc.finish())
}

/// Inverse of [`entropy_encode`]. `count` must match the encoded length and
/// every byte must be consumed.
pub fn entropy_decode(bytes: &[u8], count: usize) -> Result<Vec<i32>, EntropyError> {
    let (declared, header) = read_leb128(bytes)?;
    if declared != count as u64 {
        return Err(EntropyError::LengthMismatch {
            expected: count,
            found: declared,
        });
    }
    let body = &bytes[header..];
    if count == 0 {
        return match body.len() {
            0 => Ok(Vec::new()),
            n => Err(EntropyError::TrailingBytes(n)),
        };
    }
    let mut model = FrequencyModel::new();
    let mut dec = RangeDecoder::new(body)?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let symbol = dec.decode_symbol(&model)?;
        model.update(symbol);
        let s = if symbol == ESCAPE {
            let v = dec.decode_bits(ESCAPE_BITS)?;
            let magnitude = i64::from(v >> 1) + ESCAPE_MAGNITUDE + 1;
            if magnitude > MAX_SYMBOL_MAGNITUDE {
                return Err(EntropyError::Invalid("escaped magnitude out of range"));
            }
            let magnitude = magnitude as i32;
            if v & 1 == 1 {
                -magnitude
            } else {
                magnitude
            }
        } else if (symbol as u32) < DIRECT_SYMBOLS {
            unzigzag(symbol as u32)
        } else {
            let bits = symbol as u32 - DIRECT_SYMBOLS + FIRST_CLASS_BITS;
            let z = (1u32 << bits) + dec.decode_bits(bits)?;
            let s = unzigzag(z);
            if i64::from(s).abs() > ESCAPE_MAGNITUDE {
                return Err(EntropyError::Invalid("class-coded magnitude out of range"));
            }
            s
        };
        out.push(s);
    }
    match body.len() - dec.pos {
        0 => Ok(out),
        n => Err(EntropyError::TrailingBytes(n)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zigzag_pairs() {
        for (s, z) in [(0, 0), (-1, 1), (1, 2), (-2, 3), (2, 4)] {
            assert_eq!(zigzag(s), z);
            assert_eq!(unzigzag(z), s);
        }
        let m = MAX_SYMBOL_MAGNITUDE as i32;
        assert_eq!(unzigzag(zigzag(-m)), -m);
    }

    #[test]
    fn empty_round_trip() {
        let bytes = entropy_encode(&[]).unwrap();
        assert_eq!(bytes, vec![0]);
        assert_eq!(entropy_decode(&bytes, 0).unwrap(), Vec::<i32>::new());
    }

    #[test]
    fn all_zero_is_tiny() {
        let symbols = vec![0; 10_000];
        let bytes = entropy_encode(&symbols).unwrap();
        assert!(bytes.len() * 100 < 2 * symbols.len(), "{} bytes", bytes.len());
        assert_eq!(entropy_decode(&bytes, symbols.len()).unwrap(), symbols);
    }

    #[test]
    fn escape_boundaries() {
        let m = MAX_SYMBOL_MAGNITUDE as i32;
        let e = ESCAPE_MAGNITUDE as i32;
        let symbols = vec![
            0, 7, -8, 8, 15, -16, e - 1, e, -e, e + 1, -e - 1, m, -m, 1, -1, m - 1, 12345,
        ];
        let bytes = entropy_encode(&symbols).unwrap();
        assert_eq!(entropy_decode(&bytes, symbols.len()).unwrap(), symbols);
    }

    #[test]
    fn out_of_range_symbol_rejected() {
        let m = MAX_SYMBOL_MAGNITUDE as i32;
        assert_eq!(
            entropy_encode(&[m + 1]),
            Err(EntropyError::SymbolOutOfRange(i64::from(m) + 1))
        );
        assert!(entropy_encode(&[i32::MIN]).is_err());
    }

    #[test]
    fn wrong_count_is_length_mismatch() {
        let bytes = entropy_encode(&[1, 2, 3, 4]).unwrap();
        for count in [0, 3, 5, 1000] {
            assert!(matches!(
                entropy_decode(&bytes, count),
                Err(EntropyError::LengthMismatch { expected, found: 4 }) if expected == count
            ));
        }
    }

    #[test]
    fn truncation_and_trailing_bytes_detected() {
        let symbols: Vec<i32> = (0..500).map(|i| (i * 37 % 201) - 100).collect();
        let bytes = entropy_encode(&symbols).unwrap();
        for cut in [1, 2, bytes.len() / 2, bytes.len() - 1] {
            assert!(entropy_decode(&bytes[..cut], symbols.len()).is_err(), "cut {cut}");
        }
        let mut longer = bytes.clone();
        longer.push(0);
        assert_eq!(
            entropy_decode(&longer, symbols.len()),
            Err(EntropyError::TrailingBytes(1))
        );
    }

    #[test]
    fn model_rescale_keeps_total_consistent() {
        let mut model = FrequencyModel::new();
        for i in 0..20_000 {
            model.update(i % 3);
            assert_eq!(model.total, model.freq.iter().sum::<u32>());
            assert!(model.total <= FREQ_LIMIT);
            assert!(model.freq.iter().all(|&f| f >= 1));
        }
    }
}
