//! Bounded candidate buffers used while streaming screening scores.
//!
//! A shortlist keeps every entry whose screening score is at least
//! `floor`, where `floor` is the K-th best score seen so far minus the
//! screening error margin. The K-th best of a subset never exceeds the K-th
//! best of the whole pool, so pruning against it can only drop entries that
//! cannot reach the final top-K.

#[derive(Debug, Clone)]
pub(crate) struct Shortlist {
    pub floor: f32,
    cap: usize,
    pub items: Vec<(f32, u32)>,
}

impl Shortlist {
    pub fn new(k: usize) -> Self {
        Shortlist {
            floor: f32::NEG_INFINITY,
            cap: initial_cap(k),
            items: Vec::new(),
        }
    }

    #[inline]
    pub fn push(&mut self, score: f32, index: u32, k: usize, margin: f32) {
        if score >= self.floor {
            self.items.push((score, index));
            if self.items.len() >= self.cap {
                self.prune(k, margin);
            }
        }
    }

    /// Offers a contiguous run of scores whose indices start at `base`.
    #[inline]
    pub fn offer(&mut self, scores: &[f32], base: u32, k: usize, margin: f32) {
        const LANES: usize = 16;
        let mut chunks = scores.chunks_exact(LANES);
        let mut at = base;
        for chunk in &mut chunks {
            let floor = self.floor;
            let hit = chunk.iter().fold(false, |acc, &s| acc | (s >= floor));
            if hit {
                for (t, &s) in chunk.iter().enumerate() {
                    self.push(s, at + t as u32, k, margin);
                }
            }
            at += LANES as u32;
        }
        for (t, &s) in chunks.remainder().iter().enumerate() {
            self.push(s, at + t as u32, k, margin);
        }
    }

    pub fn prune(&mut self, k: usize, margin: f32) {
        if self.items.len() > k {
            self.items
                .select_nth_unstable_by(k - 1, |a, b| b.0.total_cmp(&a.0));
            let floor = self.items[k - 1].0 - margin;
            self.floor = self.floor.max(floor);
            let f = self.floor;
            self.items.retain(|e| e.0 >= f);
        }
        // many near-ties inside the margin: grow instead of thrashing
        if self.items.len() * 2 > self.cap {
            self.cap *= 2;
        }
    }

    /// Folds another shortlist over the same target into this one.
    pub fn merge(&mut self, other: Shortlist, k: usize, margin: f32) {
        self.floor = self.floor.max(other.floor);
        let f = self.floor;
        self.items.retain(|e| e.0 >= f);
        self.items
            .extend(other.items.into_iter().filter(|e| e.0 >= f));
        if self.items.len() >= self.cap {
            self.prune(k, margin);
        }
    }
}

/// Per-column shortlists with floors kept contiguous so the hot comparison
/// loop can run over plain `f32` slices.
#[derive(Debug, Clone)]
pub(crate) struct ColumnShortlists {
    pub floors: Vec<f32>,
    pub lists: Vec<Shortlist>,
    k: usize,
    margin: f32,
}

impl ColumnShortlists {
    pub fn new(columns: usize, k: usize, margin: f32) -> Self {
        ColumnShortlists {
            floors: vec![f32::NEG_INFINITY; columns],
            lists: vec![Shortlist::new(k); columns],
            k,
            margin,
        }
    }

    /// Offers one score row: `scores[t]` belongs to column `base + t`, with
    /// the row identified by `row_index`.
    #[inline]
    pub fn offer_row(&mut self, scores: &[f32], base: usize, row_index: u32) {
        const LANES: usize = 16;
        for (c, s8) in scores.chunks(LANES).enumerate() {
            let start = base + c * LANES;
            let f8 = &self.floors[start..start + s8.len()];
            let hit = s8.iter().zip(f8).fold(false, |acc, (s, f)| acc | (s >= f));
            if !hit {
                continue;
            }
            for (t, &s) in s8.iter().enumerate() {
                let col = start + t;
                if s >= self.floors[col] {
                    let list = &mut self.lists[col];
                    list.push(s, row_index, self.k, self.margin);
                    self.floors[col] = list.floor;
                }
            }
        }
    }

    pub fn merge(&mut self, other: ColumnShortlists) {
        for (col, list) in other.lists.into_iter().enumerate() {
            self.lists[col].merge(list, self.k, self.margin);
            self.floors[col] = self.lists[col].floor;
        }
    }
}

fn initial_cap(k: usize) -> usize {
    (2 * k).max(k + 16)
}
