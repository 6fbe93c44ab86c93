//! Dense GF(2) elimination for systematic precode encoding.

/// Row-major bit matrix with 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct BitMatrix {
    rows: usize,
    cols: usize,
    words: usize,
    data: Vec<u64>,
}

impl BitMatrix {
    pub(crate) fn zeros(rows: usize, cols: usize) -> Self {
        let words = cols.div_ceil(64);
        Self {
            rows,
            cols,
            words,
            data: vec![0; rows * words],
        }
    }

    pub(crate) fn flip(&mut self, r: usize, c: usize) {
        self.data[r * self.words + c / 64] ^= 1 << (c % 64);
    }

    pub(crate) fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.words + c / 64] >> (c % 64) & 1 == 1
    }

    fn row(&self, r: usize) -> &[u64] {
        &self.data[r * self.words..(r + 1) * self.words]
    }

    fn xor_rows(&mut self, dst: usize, src: usize) {
        let w = self.words;
        let (a, b) = if dst < src {
            let (lo, hi) = self.data.split_at_mut(src * w);
            (&mut lo[dst * w..dst * w + w], &hi[..w])
        } else {
            let (lo, hi) = self.data.split_at_mut(dst * w);
            (&mut hi[..w], &lo[src * w..src * w + w])
        };
        for (x, y) in a.iter_mut().zip(b) {
            *x ^= y;
        }
    }
}

/// Reduced row-echelon form of a parity-check matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct SystematicForm {
    rref: BitMatrix,
    /// Pivot column of each row.
    pivots: Vec<usize>,
    /// Non-pivot columns, in increasing order: the information positions.
    info: Vec<usize>,
}

impl SystematicForm {
    /// Redundant rows are dropped, so `info` has `cols - rank` entries.
    pub(crate) fn new(mut h: BitMatrix) -> Self {
        let mut pivots = Vec::with_capacity(h.rows);
        let mut row = 0;
        for col in 0..h.cols {
            if row == h.rows {
                break;
            }
            let Some(p) = (row..h.rows).find(|&r| h.get(r, col)) else {
                continue;
            };
            if p != row {
                for k in 0..h.words {
                    h.data.swap(p * h.words + k, row * h.words + k);
                }
            }
            for r in 0..h.rows {
                if r != row && h.get(r, col) {
                    h.xor_rows(r, row);
                }
            }
            pivots.push(col);
            row += 1;
        }
        let mut is_pivot = vec![false; h.cols];
        pivots.iter().for_each(|&c| is_pivot[c] = true);
        let info = (0..h.cols).filter(|&c| !is_pivot[c]).collect();
        Self {
            rref: h,
            pivots,
            info,
        }
    }

    pub(crate) fn info_positions(&self) -> &[usize] {
        &self.info
    }

    /// Codeword with `info` placed at the information positions.
    pub(crate) fn encode(&self, info: &[u8]) -> Vec<u8> {
        let n = self.rref.cols;
        let mut x = vec![0u8; n];
        let mut packed = vec![0u64; self.rref.words];
        for (&pos, &b) in self.info.iter().zip(info) {
            x[pos] = b & 1;
            if b & 1 == 1 {
                packed[pos / 64] |= 1 << (pos % 64);
            }
        }
        for (r, &p) in self.pivots.iter().enumerate() {
            let ones: u32 = self
                .rref
                .row(r)
                .iter()
                .zip(&packed)
                .map(|(a, b)| (a & b).count_ones())
                .sum();
            x[p] = (ones & 1) as u8;
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hamming() -> BitMatrix {
        let rows = [
            [1, 1, 0, 1, 1, 0, 0],
            [1, 0, 1, 1, 0, 1, 0],
            [0, 1, 1, 1, 0, 0, 1],
        ];
        let mut h = BitMatrix::zeros(3, 7);
        for (r, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if v == 1 {
                    h.flip(r, c);
                }
            }
        }
        h
    }

    fn syndrome_zero(h: &BitMatrix, x: &[u8]) -> bool {
        (0..h.rows).all(|r| {
            (0..h.cols)
                .filter(|&c| h.get(r, c))
                .map(|c| x[c])
                .sum::<u8>()
                % 2
                == 0
        })
    }

    #[test]
    fn every_message_encodes_to_a_codeword() {
        let h = hamming();
        let sf = SystematicForm::new(h.clone());
        assert_eq!(sf.info_positions().len(), 4);
        for m in 0..16u8 {
            let info: Vec<u8> = (0..4).map(|i| m >> i & 1).collect();
            let x = sf.encode(&info);
            assert!(syndrome_zero(&h, &x));
            let back: Vec<u8> = sf.info_positions().iter().map(|&p| x[p]).collect();
            assert_eq!(back, info);
        }
    }

    #[test]
    fn redundant_rows_add_information_positions() {
        let mut h = BitMatrix::zeros(2, 4);
        h.flip(0, 0);
        h.flip(0, 1);
        h.flip(1, 0);
        h.flip(1, 1);
        let sf = SystematicForm::new(h.clone());
        assert_eq!(sf.info_positions().len(), 3);
        assert!(syndrome_zero(&h, &sf.encode(&[1, 0, 1])));
    }

    #[test]
    fn wide_matrices_cross_word_boundaries() {
        let mut h = BitMatrix::zeros(2, 130);
        for c in [3, 64, 129] {
            h.flip(0, c);
        }
        for c in [70, 128] {
            h.flip(1, c);
        }
        let sf = SystematicForm::new(h.clone());
        let info = vec![1u8; 128];
        assert!(syndrome_zero(&h, &sf.encode(&info)));
    }
}
