//! Integer lattice utilities shared by the box geometry.

/// Integer 3-vector.
pub type IVec3 = [i32; 3];

#[inline]
pub fn norm2(v: IVec3) -> u64 {
    let [x, y, z] = v.map(|c| c as i64);
    (x * x + y * y + z * z) as u64
}

#[inline]
pub fn add(a: IVec3, b: IVec3) -> IVec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: IVec3, b: IVec3) -> IVec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn isqrt(n: u64) -> u64 {
    let mut r = (n as f64).sqrt() as u64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// All lattice vectors with `|v|^2 <= max_norm`, bucketed by squared length.
/// Within a bucket vectors are in lexicographic order.
#[derive(Debug, Clone, Default)]
pub struct SphereTable {
    max_norm: u64,
    offsets: Vec<usize>,
    points: Vec<IVec3>,
}

impl SphereTable {
    pub fn new(max_norm: u64) -> Self {
        let r = isqrt(max_norm) as i32;
        let mut counts = vec![0usize; max_norm as usize + 2];
        for x in -r..=r {
            for y in -r..=r {
                for z in -r..=r {
                    let n = norm2([x, y, z]);
                    if n <= max_norm {
                        counts[n as usize + 1] += 1;
                    }
                }
            }
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let offsets = counts.clone();
        let mut fill = counts;
        let mut points = vec![[0; 3]; *offsets.last().unwrap()];
        for x in -r..=r {
            for y in -r..=r {
                for z in -r..=r {
                    let n = norm2([x, y, z]);
                    if n <= max_norm {
                        points[fill[n as usize]] = [x, y, z];
                        fill[n as usize] += 1;
                    }
                }
            }
        }
        Self {
            max_norm,
            offsets,
            points,
        }
    }

    pub fn max_norm(&self) -> u64 {
        self.max_norm
    }

    /// Grows the table (at least doubling) so that `norm` is covered.
    pub fn ensure(&mut self, norm: u64) {
        if norm > self.max_norm || self.offsets.is_empty() {
            *self = Self::new(norm.max(2 * self.max_norm).max(16));
        }
    }

    /// Vectors with squared length exactly `norm`. Panics if not covered.
    pub fn shell(&self, norm: u64) -> &[IVec3] {
        assert!(norm <= self.max_norm, "sphere table does not cover {norm}");
        let n = norm as usize;
        &self.points[self.offsets[n]..self.offsets[n + 1]]
    }
}

/// Number of lattice vectors on each sphere `|m|^2 = e` for `e <= e_max`.
pub fn shell_counts(e_max: u64) -> Vec<u64> {
    let r = isqrt(e_max) as i64;
    let mut counts = vec![0u64; e_max as usize + 1];
    for x in -r..=r {
        for y in -r..=r {
            let xy = x * x + y * y;
            if xy as u64 > e_max {
                continue;
            }
            for z in -r..=r {
                let n = (xy + z * z) as u64;
                if n <= e_max {
                    counts[n as usize] += 1;
                }
            }
        }
    }
    counts
}

/// The 48 proper and improper symmetries of the cube, as signed axis
/// permutations.
pub fn cubic_symmetries() -> Vec<([usize; 3], [i32; 3])> {
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut ops = Vec::with_capacity(48);
    for p in PERMS {
        for s in 0..8 {
            let signs = [
                if s & 1 == 0 { 1 } else { -1 },
                if s & 2 == 0 { 1 } else { -1 },
                if s & 4 == 0 { 1 } else { -1 },
            ];
            ops.push((p, signs));
        }
    }
    ops
}

#[inline]
pub fn apply_symmetry(op: &([usize; 3], [i32; 3]), v: IVec3) -> IVec3 {
    let (p, s) = op;
    [s[0] * v[p[0]], s[1] * v[p[1]], s[2] * v[p[2]]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_table_matches_counts() {
        let t = SphereTable::new(50);
        let c = shell_counts(50);
        for n in 0..=50u64 {
            assert_eq!(t.shell(n).len() as u64, c[n as usize], "norm {n}");
            assert!(t.shell(n).iter().all(|&v| norm2(v) == n));
        }
        assert_eq!(c[0], 1);
        assert_eq!(c[1], 6);
        assert_eq!(c[7], 0);
        assert_eq!(c[9], 30);
    }

    #[test]
    fn isqrt_exact() {
        for n in 0..2000u64 {
            let r = isqrt(n);
            assert!(r * r <= n && (r + 1) * (r + 1) > n);
        }
    }

    #[test]
    fn symmetries_preserve_norm() {
        let ops = cubic_symmetries();
        assert_eq!(ops.len(), 48);
        let v = [3, -1, 2];
        for op in &ops {
            assert_eq!(norm2(apply_symmetry(op, v)), norm2(v));
        }
    }
}
