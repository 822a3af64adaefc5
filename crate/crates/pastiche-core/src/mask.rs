//! Binary masks and their run-length codecs.
//!
//! Masks travel through the pipeline as [`RleMask`]: column-major run
//! lengths starting with a run of zeros (which may be empty when the first
//! pixel is foreground). The compressed string form packs each run into
//! 5-bit chunks with a continuation bit at ASCII offset 48; from the fourth
//! run onward the value is delta-encoded against the run two positions
//! earlier and sign-extended on decode. This is byte-compatible with the
//! counts strings found in COCO-style JSON.

use crate::error::{Error, Result};

/// Dense binary mask, one byte per pixel (0 or 1), stored column-major
/// (Fortran order, pixel `(x, y)` at index `x * height + y`) so it shares
/// the RLE stream's layout and codecs run as linear scans.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl Bitmap {
    pub fn new(width: u32, height: u32) -> Self {
        assert!(
            width > 0 && height > 0,
            "bitmap dimensions must be positive"
        );
        Bitmap {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    /// Builds a bitmap from column-major bytes; any nonzero byte is foreground.
    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Self {
        assert!(
            width > 0 && height > 0,
            "bitmap dimensions must be positive"
        );
        assert_eq!(data.len(), width as usize * height as usize);
        let data = data.into_iter().map(|v| u8::from(v != 0)).collect();
        Bitmap {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Column-major pixel bytes.
    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[x as usize * self.height as usize + y as usize] != 0
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.data[x as usize * self.height as usize + y as usize] = u8::from(v);
    }

    pub fn count_ones(&self) -> u64 {
        self.data.iter().map(|&v| v as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    /// `self & !other`, in place. Panics on dimension mismatch.
    pub fn subtract(&mut self, other: &Bitmap) {
        assert_eq!((self.width, self.height), (other.width, other.height));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a &= 1 - b;
        }
    }

    /// `self | other`, in place. Panics on dimension mismatch.
    pub fn union(&mut self, other: &Bitmap) {
        assert_eq!((self.width, self.height), (other.width, other.height));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a |= b;
        }
    }

    /// Returns `self & !covered` and folds `self` into `covered` in the
    /// same pass. Panics on dimension mismatch.
    pub fn occlude_against(&self, covered: &mut Bitmap) -> Bitmap {
        assert_eq!((self.width, self.height), (covered.width, covered.height));
        let mut visible = vec![0u8; self.data.len()];
        for ((v, &p), c) in visible.iter_mut().zip(&self.data).zip(&mut covered.data) {
            *v = p & (1 - *c);
            *c |= p;
        }
        Bitmap {
            width: self.width,
            height: self.height,
            data: visible,
        }
    }

    /// Copies out the rectangle at `(x0, y0)` of size `w x h`, which must
    /// lie within bounds.
    pub fn crop(&self, x0: u32, y0: u32, w: u32, h: u32) -> Bitmap {
        assert!(w > 0 && h > 0 && x0 + w <= self.width && y0 + h <= self.height);
        let mut data = Vec::with_capacity(w as usize * h as usize);
        for x in x0..x0 + w {
            let base = x as usize * self.height as usize + y0 as usize;
            data.extend_from_slice(&self.data[base..base + h as usize]);
        }
        Bitmap {
            width: w,
            height: h,
            data,
        }
    }
}

/// Tight axis-aligned pixel bounds: `x, y` is the top-left set pixel corner,
/// `w, h` the extent. The empty mask maps to all zeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }
}

/// Column-major run-length encoded binary mask.
///
/// Invariants: `sum(counts) == height * width`; every run after the first is
/// positive (only the leading zero-run may be empty).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RleMask {
    height: u32,
    width: u32,
    counts: Vec<u32>,
}

impl RleMask {
    /// Validates and constructs a mask from raw run lengths.
    pub fn from_counts(height: u32, width: u32, counts: Vec<u32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::MaskFormat(format!(
                "mask dimensions must be positive, got {height}x{width}"
            )));
        }
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        let expect = height as u64 * width as u64;
        if total != expect {
            return Err(Error::MaskFormat(format!(
                "run lengths sum to {total}, expected {height}x{width}={expect}"
            )));
        }
        if counts.iter().skip(1).any(|&c| c == 0) {
            return Err(Error::MaskFormat(
                "zero-length run after the first position".into(),
            ));
        }
        if counts.is_empty() {
            return Err(Error::MaskFormat("empty run list".into()));
        }
        Ok(RleMask {
            height,
            width,
            counts,
        })
    }

    /// Encodes a dense bitmap. Runs are column-major and start with zeros;
    /// the bitmap's storage order matches, so this is a single linear scan.
    pub fn encode(bitmap: &Bitmap) -> Self {
        let mut counts = Vec::new();
        let mut prev = 0u8;
        let mut run: u32 = 0;
        for &v in bitmap.as_bytes() {
            if v != prev {
                counts.push(run);
                run = 0;
                prev = v;
            }
            run += 1;
        }
        counts.push(run);
        RleMask {
            height: bitmap.height(),
            width: bitmap.width(),
            counts,
        }
    }

    /// Decodes to a dense bitmap.
    pub fn decode(&self) -> Bitmap {
        let mut data = vec![0u8; self.width as usize * self.height as usize];
        let mut idx = 0usize;
        let mut v = 0u8;
        for &c in &self.counts {
            let end = idx + c as usize;
            if v == 1 {
                data[idx..end].fill(1);
            }
            idx = end;
            v = 1 - v;
        }
        Bitmap::from_raw(self.width, self.height, data)
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Foreground pixel count. Foreground runs sit at odd indices.
    pub fn area(&self) -> u64 {
        self.counts
            .iter()
            .skip(1)
            .step_by(2)
            .map(|&c| c as u64)
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    /// Tight bounding box, computed from the run stream without decoding.
    pub fn bbox(&self) -> BBox {
        let h = self.height as u64;
        let mut x_min = self.width as u64;
        let mut x_max: u64 = 0; // exclusive
        let mut y_min = h;
        let mut y_max: u64 = 0; // exclusive
        let mut any = false;

        let mut pos: u64 = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            let c = c as u64;
            if i % 2 == 1 && c > 0 {
                any = true;
                let start = pos;
                let end = pos + c - 1; // inclusive
                let (x0, y0) = (start / h, start % h);
                let (x1, y1) = (end / h, end % h);
                x_min = x_min.min(x0);
                x_max = x_max.max(x1 + 1);
                if x0 != x1 {
                    // run wraps at least one column boundary: full row range
                    y_min = 0;
                    y_max = h;
                } else {
                    y_min = y_min.min(y0);
                    y_max = y_max.max(y1 + 1);
                }
            }
            pos += c;
        }

        if !any {
            return BBox::default();
        }
        BBox {
            x: x_min as u32,
            y: y_min as u32,
            w: (x_max - x_min) as u32,
            h: (y_max - y_min) as u32,
        }
    }

    /// Compresses the run lengths into the printable counts string.
    pub fn to_compressed(&self) -> String {
        let mut out = String::with_capacity(self.counts.len() * 2);
        for (i, &count) in self.counts.iter().enumerate() {
            let mut x = count as i64;
            if i > 2 {
                x -= self.counts[i - 2] as i64;
            }
            loop {
                let chunk = (x & 0x1f) as u8;
                x >>= 5;
                let more = if chunk & 0x10 != 0 { x != -1 } else { x != 0 };
                out.push((chunk | if more { 0x20 } else { 0 }).wrapping_add(48) as char);
                if !more {
                    break;
                }
            }
        }
        out
    }

    /// Inverse of [`to_compressed`](Self::to_compressed) for the stated dimensions.
    pub fn from_compressed(s: &str, height: u32, width: u32) -> Result<Self> {
        let bytes = s.as_bytes();
        let mut counts: Vec<u32> = Vec::new();
        let mut i = 0;
        while i < bytes.len() {
            let mut x: i64 = 0;
            let mut shift = 0u32;
            loop {
                if i >= bytes.len() {
                    return Err(Error::MaskFormat(
                        "truncated chunk stream in compressed counts".into(),
                    ));
                }
                let c = bytes[i].wrapping_sub(48) as i64;
                if !(0..64).contains(&c) {
                    return Err(Error::MaskFormat(format!(
                        "invalid byte {:#04x} at position {i} in compressed counts",
                        bytes[i]
                    )));
                }
                i += 1;
                x |= (c & 0x1f) << shift;
                shift += 5;
                if c & 0x20 == 0 {
                    if c & 0x10 != 0 {
                        x |= -1i64 << shift; // sign-extend the final chunk
                    }
                    break;
                }
            }
            if counts.len() > 2 {
                x += counts[counts.len() - 2] as i64;
            }
            if x < 0 || x > u32::MAX as i64 {
                return Err(Error::MaskFormat(format!(
                    "run length {x} out of range in compressed counts"
                )));
            }
            counts.push(x as u32);
        }
        RleMask::from_counts(height, width, counts)
    }
}

/// Wire form shared by the pool manifest and plan traces:
/// `{"size": [h, w], "counts": "<compressed>"}`. Deserialization also
/// accepts raw run-length arrays.
impl serde::Serialize for RleMask {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("RleMask", 2)?;
        s.serialize_field("size", &[self.height, self.width])?;
        s.serialize_field("counts", &self.to_compressed())?;
        s.end()
    }
}

impl<'de> serde::Deserialize<'de> for RleMask {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        #[derive(serde::Deserialize)]
        #[serde(untagged)]
        enum Counts {
            Compressed(String),
            Raw(Vec<u32>),
        }
        #[derive(serde::Deserialize)]
        struct Wire {
            size: [u32; 2],
            counts: Counts,
        }
        let wire = Wire::deserialize(deserializer)?;
        let [h, w] = wire.size;
        let mask = match wire.counts {
            Counts::Compressed(s) => RleMask::from_compressed(&s, h, w),
            Counts::Raw(counts) => RleMask::from_counts(h, w, counts),
        };
        mask.map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn bitmap_from_rows(rows: &[&str]) -> Bitmap {
        let h = rows.len() as u32;
        let w = rows[0].len() as u32;
        let mut b = Bitmap::new(w, h);
        for (y, row) in rows.iter().enumerate() {
            for (x, ch) in row.chars().enumerate() {
                b.set(x as u32, y as u32, ch == '1');
            }
        }
        b
    }

    /// Independent per-pixel scan used as the bbox/area oracle.
    fn scan_bbox_area(b: &Bitmap) -> (BBox, u64) {
        let (mut x0, mut y0) = (u32::MAX, u32::MAX);
        let (mut x1, mut y1) = (0u32, 0u32); // inclusive
        let mut area = 0u64;
        for y in 0..b.height() {
            for x in 0..b.width() {
                if b.get(x, y) {
                    area += 1;
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        if area == 0 {
            return (BBox::default(), 0);
        }
        (
            BBox {
                x: x0,
                y: y0,
                w: x1 - x0 + 1,
                h: y1 - y0 + 1,
            },
            area,
        )
    }

    pub(crate) fn random_bitmap(rng: &mut impl Rng, max_side: u32) -> Bitmap {
        let w = rng.random_range(1..=max_side);
        let h = rng.random_range(1..=max_side);
        let density = rng.random_range(0.0..=1.0);
        let mut b = Bitmap::new(w, h);
        for y in 0..h {
            for x in 0..w {
                b.set(x, y, rng.random_bool(density));
            }
        }
        b
    }

    #[test]
    fn all_zero_encodes_to_single_run() {
        let rle = RleMask::encode(&Bitmap::new(3, 3));
        assert_eq!(rle.counts(), &[9]);
        assert_eq!(rle.area(), 0);
    }

    #[test]
    fn all_one_encodes_with_leading_zero() {
        let mut b = Bitmap::new(3, 3);
        for y in 0..3 {
            for x in 0..3 {
                b.set(x, y, true);
            }
        }
        let rle = RleMask::encode(&b);
        assert_eq!(rle.counts(), &[0, 9]);
        assert_eq!(rle.area(), 9);
    }

    #[test]
    fn single_pixel_bbox() {
        let mut b = Bitmap::new(6, 6);
        b.set(2, 3, true);
        let rle = RleMask::encode(&b);
        assert_eq!(
            rle.bbox(),
            BBox {
                x: 2,
                y: 3,
                w: 1,
                h: 1
            }
        );
        assert_eq!(rle.area(), 1);
    }

    #[test]
    fn full_mask_bbox() {
        // 4 rows x 5 columns, fully set
        let b = bitmap_from_rows(&["11111", "11111", "11111", "11111"]);
        let rle = RleMask::encode(&b);
        assert_eq!(
            rle.bbox(),
            BBox {
                x: 0,
                y: 0,
                w: 5,
                h: 4
            }
        );
        assert_eq!(rle.area(), 20);
    }

    #[test]
    fn empty_mask_bbox_is_zero() {
        let rle = RleMask::encode(&Bitmap::new(4, 4));
        assert_eq!(rle.bbox(), BBox::default());
    }

    #[test]
    fn bbox_spanning_column_wrap() {
        // a foreground run crossing a column boundary covers all rows
        let b = bitmap_from_rows(&["010", "011", "010"]);
        let rle = RleMask::encode(&b);
        assert_eq!(
            rle.bbox(),
            BBox {
                x: 1,
                y: 0,
                w: 2,
                h: 3
            }
        );
    }

    #[test]
    fn counts_sum_mismatch_rejected() {
        let err = RleMask::from_counts(3, 3, vec![4, 4]).unwrap_err();
        assert!(err.to_string().contains("sum"));
    }

    #[test]
    fn interior_zero_run_rejected() {
        assert!(RleMask::from_counts(3, 3, vec![4, 0, 5]).is_err());
        // leading zero is fine
        assert!(RleMask::from_counts(3, 3, vec![0, 9]).is_ok());
    }

    #[test]
    fn truncated_compressed_stream_rejected() {
        let rle = RleMask::from_counts(10, 10, vec![37, 20, 43]).unwrap();
        let s = rle.to_compressed();
        let err = RleMask::from_compressed(&s[..s.len() - 1], 10, 10).unwrap_err();
        assert!(matches!(err, Error::MaskFormat(_)));
    }

    #[test]
    fn compressed_empty_3x3() {
        let rle = RleMask::from_counts(3, 3, vec![9]).unwrap();
        let s = rle.to_compressed();
        assert!((1..=2).contains(&s.len()), "got {s:?}");
        let back = RleMask::from_compressed(&s, 3, 3).unwrap();
        assert_eq!(back.counts(), &[9]);
    }

    #[test]
    fn seeded_roundtrip_1000_masks() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..1000 {
            let b = random_bitmap(&mut rng, 64);
            let rle = RleMask::encode(&b);
            assert_eq!(rle.decode(), b);
            let s = rle.to_compressed();
            let back = RleMask::from_compressed(&s, b.height(), b.width()).unwrap();
            assert_eq!(back, rle);
        }
    }

    #[test]
    fn bbox_and_area_match_pixel_scan() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let b = random_bitmap(&mut rng, 48);
            let rle = RleMask::encode(&b);
            let (bbox, area) = scan_bbox_area(&b);
            assert_eq!(rle.bbox(), bbox);
            assert_eq!(rle.area(), area);
        }
    }

    proptest! {
        #[test]
        fn roundtrip_dense_runs_string(w in 1u32..40, h in 1u32..40, seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let density = rng.random_range(0.0..=1.0);
            let mut b = Bitmap::new(w, h);
            for y in 0..h {
                for x in 0..w {
                    b.set(x, y, rng.random_bool(density));
                }
            }
            let rle = RleMask::encode(&b);
            prop_assert_eq!(&rle.decode(), &b);
            let back = RleMask::from_compressed(&rle.to_compressed(), h, w).unwrap();
            prop_assert_eq!(back, rle);
        }
    }
}
