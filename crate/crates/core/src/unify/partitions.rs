use super::UnifyError;

/// Blocks of identified variables, each block sorted, blocks ordered by
/// their first element.
pub type Partition = Vec<Vec<String>>;

/// Streams every set partition of `vars`, finest first: all partitions with
/// n blocks, then n-1, down to the single block. Within a block count the
/// order is lexicographic on restricted growth strings.
pub fn enumerate_identifications(vars: &[String], limit: usize) -> Result<Identifications, UnifyError> {
    if vars.len() > limit {
        return Err(UnifyError::PartitionSpaceExceeded { vars: vars.len(), limit });
    }
    let n = vars.len();
    Ok(Identifications { vars: vars.to_vec(), blocks: n, current: None, done: false })
}

pub struct Identifications {
    vars: Vec<String>,
    blocks: usize,
    current: Option<Vec<usize>>,
    done: bool,
}

impl Identifications {
    /// Smallest growth string of length n using exactly k blocks.
    fn first(n: usize, k: usize) -> Vec<usize> {
        (0..n).map(|i| (i + k).saturating_sub(n)).collect()
    }

    /// Lexicographic successor with exactly k blocks.
    fn successor(rgs: &[usize], k: usize) -> Option<Vec<usize>> {
        let n = rgs.len();
        for i in (0..n).rev() {
            let prefix_max = rgs[..i].iter().copied().max().map_or(0, |m| m + 1);
            let mut next = rgs[i] + 1;
            while next <= prefix_max.min(k.saturating_sub(1)) {
                let used = prefix_max.max(next + 1);
                let remaining = n - 1 - i;
                if k >= used && k - used <= remaining {
                    let mut out = rgs[..i].to_vec();
                    out.push(next);
                    let fresh = k - used;
                    for j in 0..remaining {
                        if j + fresh >= remaining {
                            out.push(used + (j + fresh - remaining));
                        } else {
                            out.push(0);
                        }
                    }
                    return Some(out);
                }
                next += 1;
            }
        }
        None
    }

    fn to_partition(&self, rgs: &[usize]) -> Partition {
        let k = rgs.iter().copied().max().map_or(0, |m| m + 1);
        let mut blocks = vec![Vec::new(); k];
        for (v, &b) in self.vars.iter().zip(rgs) {
            blocks[b].push(v.clone());
        }
        blocks
    }
}

impl Iterator for Identifications {
    type Item = Partition;

    fn next(&mut self) -> Option<Partition> {
        if self.done {
            return None;
        }
        let n = self.vars.len();
        if n == 0 {
            self.done = true;
            return Some(Vec::new());
        }
        loop {
            let next = match &self.current {
                None => Some(Self::first(n, self.blocks)),
                Some(cur) => Self::successor(cur, self.blocks),
            };
            match next {
                Some(rgs) => {
                    let p = self.to_partition(&rgs);
                    self.current = Some(rgs);
                    return Some(p);
                }
                None if self.blocks > 1 => {
                    self.blocks -= 1;
                    self.current = None;
                }
                None => {
                    self.done = true;
                    return None;
                }
            }
        }
    }
}
