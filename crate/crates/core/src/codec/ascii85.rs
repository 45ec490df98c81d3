//! Plain base-85 over the alphabet `'!'..='u'`: no `z` shorthand, no `<~ ~>`
//! framing. A final partial group of `k` bytes becomes `k + 1` characters.

use super::CodecError;

const FIRST: u8 = b'!';
const LAST: u8 = b'u';

pub fn ascii85_encode(b: &[u8]) -> String {
    let mut out = String::with_capacity(b.len().div_ceil(4) * 5);
    for chunk in b.chunks(4) {
        let mut group = [0u8; 4];
        group[..chunk.len()].copy_from_slice(chunk);
        let mut n = u32::from_be_bytes(group);
        let mut digits = [0u8; 5];
        for d in digits.iter_mut().rev() {
            *d = (n % 85) as u8 + FIRST;
            n /= 85;
        }
        out.extend(digits[..chunk.len() + 1].iter().map(|&c| c as char));
    }
    out
}

pub fn ascii85_decode(s: &str) -> Result<Vec<u8>, CodecError> {
    let bytes = s.as_bytes();
    if let Some(c) = s.chars().find(|&c| !(FIRST as char..=LAST as char).contains(&c)) {
        return Err(CodecError::BadAscii85Char(c));
    }
    let mut out = Vec::with_capacity(bytes.len() / 5 * 4 + 4);
    for chunk in bytes.chunks(5) {
        if chunk.len() == 1 {
            return Err(CodecError::BadAscii85Length);
        }
        // partial groups are padded with the highest digit
        let mut n: u64 = 0;
        for i in 0..5 {
            let digit = chunk.get(i).map_or(84, |&c| c - FIRST);
            n = n * 85 + digit as u64;
        }
        if chunk.len() == 5 && n > u32::MAX as u64 {
            return Err(CodecError::Ascii85Overflow);
        }
        let word = (n.min(u32::MAX as u64) as u32).to_be_bytes();
        out.extend_from_slice(&word[..chunk.len() - 1]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_examples() {
        assert_eq!(ascii85_encode(b"Man "), "9jqo^");
        assert_eq!(ascii85_encode(b""), "");
        assert_eq!(ascii85_encode(&[0]), "!!");
        assert_eq!(ascii85_encode(&[0, 0, 0, 0]), "!!!!!");
        assert_eq!(ascii85_encode(&[0xff; 4]), "s8W-!");
    }

    #[test]
    fn decode_examples() {
        assert_eq!(ascii85_decode("9jqo^").unwrap(), b"Man ");
        assert_eq!(ascii85_decode("").unwrap(), Vec::<u8>::new());
        assert_eq!(ascii85_decode("~"), Err(CodecError::BadAscii85Char('~')));
        assert_eq!(ascii85_decode("9jqo^!"), Err(CodecError::BadAscii85Length));
        assert_eq!(ascii85_decode("uuuuu"), Err(CodecError::Ascii85Overflow));
    }

    #[test]
    fn partial_groups() {
        for len in 0..12 {
            let data: Vec<u8> = (0..len as u8).map(|i| i.wrapping_mul(97) ^ 0xa5).collect();
            let enc = ascii85_encode(&data);
            assert_eq!(enc.len(), 5 * (len / 4) + if len % 4 == 0 { 0 } else { len % 4 + 1 });
            assert_eq!(ascii85_decode(&enc).unwrap(), data);
        }
    }
}
