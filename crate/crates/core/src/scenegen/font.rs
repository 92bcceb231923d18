//! 5x7 bitmap glyphs for the fixed text object "TXT".

const T: [u8; 7] = [0b11111, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100];
const X: [u8; 7] = [0b10001, 0b10001, 0b01010, 0b00100, 0b01010, 0b10001, 0b10001];

const GLYPHS: [[u8; 7]; 3] = [T, X, T];
const COLS: u32 = 17; // three 5-wide glyphs with one blank column between
const ROWS: u32 = 7;

fn cell(gx: u32, gy: u32) -> bool {
    let glyph = gx / 6;
    let col = gx % 6;
    if col == 5 {
        return false;
    }
    GLYPHS[glyph as usize][gy as usize] >> (4 - col) & 1 == 1
}

/// Whether pixel (dx, dy) of a `w`x`h` text box is ink (nearest-neighbor scaling).
pub fn text_pixel(w: u32, h: u32, dx: u32, dy: u32) -> bool {
    cell(dx * COLS / w, dy * ROWS / h)
}
