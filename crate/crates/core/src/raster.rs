//! Integer line rasterization and wall-crossing counts.
//!
//! A segment is rasterized by stepping one cell at a time along its major
//! axis and rounding the minor coordinate half-up, which visits exactly one
//! cell per major-axis step. All arithmetic is integral.

/// Cells on the rasterized segment from `from` to `to`, both included, in
/// order of travel. Coordinates are `(row, col)`.
pub fn line_cells(from: (usize, usize), to: (usize, usize)) -> LineCells {
    let (r0, c0) = (from.0 as i64, from.1 as i64);
    let (r1, c1) = (to.0 as i64, to.1 as i64);
    LineCells {
        r0,
        c0,
        dr: r1 - r0,
        dc: c1 - c0,
        steps: (r1 - r0).abs().max((c1 - c0).abs()),
        t: 0,
    }
}

#[derive(Debug, Clone)]
pub struct LineCells {
    r0: i64,
    c0: i64,
    dr: i64,
    dc: i64,
    steps: i64,
    t: i64,
}

/// `round_half_up(num / den)` for `den > 0`.
#[inline]
fn div_round(num: i64, den: i64) -> i64 {
    (2 * num + den).div_euclid(2 * den)
}

impl Iterator for LineCells {
    type Item = (usize, usize);

    fn next(&mut self) -> Option<Self::Item> {
        if self.t > self.steps {
            return None;
        }
        let t = self.t;
        self.t += 1;
        if self.steps == 0 {
            return Some((self.r0 as usize, self.c0 as usize));
        }
        let (r, c) = if self.dr.abs() >= self.dc.abs() {
            let r = self.r0 + self.dr.signum() * t;
            (r, self.c0 + div_round(self.dc * t, self.steps))
        } else {
            let c = self.c0 + self.dc.signum() * t;
            (self.r0 + div_round(self.dr * t, self.steps), c)
        };
        Some((r as usize, c as usize))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.steps + 1 - self.t).max(0) as usize;
        (left, Some(left))
    }
}

impl ExactSizeIterator for LineCells {}

/// Number of free/occupied transitions met while walking the rasterized
/// segment from `from` to `to`. `occupied(row, col)` reports building cells.
pub fn count_crossings(
    from: (usize, usize),
    to: (usize, usize),
    occupied: impl Fn(usize, usize) -> bool,
) -> u32 {
    let mut cells = line_cells(from, to);
    let Some((r, c)) = cells.next() else {
        return 0;
    };
    let mut inside = occupied(r, c);
    let mut crossings = 0;
    for (r, c) in cells {
        let now = occupied(r, c);
        if now != inside {
            crossings += 1;
            inside = now;
        }
    }
    crossings
}
