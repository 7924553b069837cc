use std::ops::Range;

/// Balanced contiguous split of `len` items into `parts`; the first
/// `len % parts` parts get one extra item.
pub fn balanced_share(len: usize, parts: usize, index: usize) -> Range<usize> {
    let base = len / parts;
    let extra = len % parts;
    let start = index * base + index.min(extra);
    start..start + base + usize::from(index < extra)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced() {
        let sizes: Vec<usize> = (0..3).map(|i| balanced_share(10, 3, i).len()).collect();
        assert_eq!(sizes, vec![4, 3, 3]);
        assert_eq!(balanced_share(10, 3, 2), 7..10);
        assert_eq!(balanced_share(2, 4, 3), 2..2);
        assert_eq!(balanced_share(100, 4, 1), 25..50);
    }
}
