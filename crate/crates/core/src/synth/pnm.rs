//! Binary PPM (P6) and PGM (P5) with maxval 255.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// 3 for PPM, 1 for PGM.
    pub channels: usize,
    pub data: Vec<u8>,
}

pub fn encode(img: &Image) -> Result<Vec<u8>> {
    let magic = match img.channels {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::invalid(format!("pnm supports 1 or 3 channels, got {c}"))),
    };
    if img.data.len() != img.width * img.height * img.channels {
        return Err(Error::invalid("pnm data length does not match dimensions"));
    }
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::format("truncated pnm header")),
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let channels = match token()?.as_str() {
        "P5" => 1,
        "P6" => 3,
        m => return Err(Error::format(format!("unsupported pnm magic {m:?}"))),
    };
    let mut num = || -> Result<usize> {
        let t = token()?;
        t.parse().map_err(|_| Error::format(format!("bad pnm header field {t:?}")))
    };
    let (width, height, maxval) = (num()?, num()?, num()?);
    if maxval != 255 {
        return Err(Error::format(format!("only maxval 255 is supported, got {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let start = pos + 1;
    let n = width * height * channels;
    let data = bytes
        .get(start..start + n)
        .ok_or_else(|| Error::format("truncated pnm raster"))?
        .to_vec();
    Ok(Image {
        width,
        height,
        channels,
        data,
    })
}

pub fn write(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    std::fs::write(path, encode(img)?)?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<Image> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        for channels in [1, 3] {
            let img = Image {
                width: 3,
                height: 2,
                channels,
                data: (0..6 * channels as u8).collect(),
            };
            assert_eq!(decode(&encode(&img).unwrap()).unwrap(), img);
        }
    }

    #[test]
    fn comments_and_errors() {
        let img = decode(b"P5\n# hi\n2 1\n255\n\x01\x02").unwrap();
        assert_eq!(img.data, vec![1, 2]);
        assert!(decode(b"P3\n1 1\n255\n").is_err());
        assert!(decode(b"P5\n2 2\n255\n\x01").is_err());
        assert!(decode(b"P5\n1 1\n65535\n\x00\x00").is_err());
    }
}
