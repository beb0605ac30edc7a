//! 5x7 uppercase bitmap font. Each row is 5 bits, most significant = leftmost.

pub const GLYPH_W: usize = 5;
pub const GLYPH_H: usize = 7;

#[rustfmt::skip]
const ROWS: [[u8; GLYPH_H]; 26] = [
    [0b01110, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001], // A
    [0b11110, 0b10001, 0b10001, 0b11110, 0b10001, 0b10001, 0b11110], // B
    [0b01110, 0b10001, 0b10000, 0b10000, 0b10000, 0b10001, 0b01110], // C
    [0b11100, 0b10010, 0b10001, 0b10001, 0b10001, 0b10010, 0b11100], // D
    [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b11111], // E
    [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b10000], // F
    [0b01110, 0b10001, 0b10000, 0b10111, 0b10001, 0b10001, 0b01111], // G
    [0b10001, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001], // H
    [0b01110, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110], // I
    [0b00111, 0b00010, 0b00010, 0b00010, 0b00010, 0b10010, 0b01100], // J
    [0b10001, 0b10010, 0b10100, 0b11000, 0b10100, 0b10010, 0b10001], // K
    [0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b11111], // L
    [0b10001, 0b11011, 0b10101, 0b10101, 0b10001, 0b10001, 0b10001], // M
    [0b10001, 0b10001, 0b11001, 0b10101, 0b10011, 0b10001, 0b10001], // N
    [0b01110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110], // O
    [0b11110, 0b10001, 0b10001, 0b11110, 0b10000, 0b10000, 0b10000], // P
    [0b01110, 0b10001, 0b10001, 0b10001, 0b10101, 0b10010, 0b01101], // Q
    [0b11110, 0b10001, 0b10001, 0b11110, 0b10100, 0b10010, 0b10001], // R
    [0b01111, 0b10000, 0b10000, 0b01110, 0b00001, 0b00001, 0b11110], // S
    [0b11111, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100], // T
    [0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110], // U
    [0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01010, 0b00100], // V
    [0b10001, 0b10001, 0b10001, 0b10101, 0b10101, 0b10101, 0b01010], // W
    [0b10001, 0b10001, 0b01010, 0b00100, 0b01010, 0b10001, 0b10001], // X
    [0b10001, 0b10001, 0b10001, 0b01010, 0b00100, 0b00100, 0b00100], // Y
    [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b10000, 0b11111], // Z
];

pub const LETTERS: usize = ROWS.len();

/// Tight column/row extent of a letter: `(col0, col1, row0, row1)`, inclusive.
pub fn extent(letter: u8) -> (usize, usize, usize, usize) {
    let rows = &ROWS[letter as usize % LETTERS];
    let mut cols = (GLYPH_W, 0);
    let mut rws = (GLYPH_H, 0);
    for (r, bits) in rows.iter().enumerate() {
        for c in 0..GLYPH_W {
            if bits >> (GLYPH_W - 1 - c) & 1 == 1 {
                cols = (cols.0.min(c), cols.1.max(c));
                rws = (rws.0.min(r), rws.1.max(r));
            }
        }
    }
    (cols.0, cols.1, rws.0, rws.1)
}

pub fn pixel(letter: u8, col: usize, row: usize) -> bool {
    let rows = &ROWS[letter as usize % LETTERS];
    col < GLYPH_W && row < GLYPH_H && rows[row] >> (GLYPH_W - 1 - col) & 1 == 1
}

/// Samples the tight-cropped letter at normalized coordinates in `[0, 1]`.
pub fn sample(letter: u8, a: f64, b: f64) -> bool {
    let (c0, c1, r0, r1) = extent(letter);
    let cols = (c1 - c0 + 1) as f64;
    let rows = (r1 - r0 + 1) as f64;
    let c = ((a * cols) as usize).min(c1 - c0) + c0;
    let r = ((b * rows) as usize).min(r1 - r0) + r0;
    pixel(letter, c, r)
}
