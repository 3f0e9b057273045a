//! Smooth weighted round-robin: a deterministic per-packet scheduler whose
//! running per-item counts stay within one packet of `n * weight / total`.

/// An item scheduled by [`pick`].
pub trait Weighted {
    fn weight(&self) -> i64;
    fn credit(&mut self) -> &mut i64;
}

/// Chooses the next item. Every item's credit grows by its weight, the item
/// with the highest credit wins (lowest index on ties) and pays back the
/// total weight. Items of weight 0 are never chosen.
pub fn pick<T: Weighted>(items: &mut [T]) -> Option<usize> {
    let mut total = 0i64;
    let mut best: Option<(usize, i64)> = None;
    for (i, item) in items.iter_mut().enumerate() {
        let w = item.weight();
        if w <= 0 {
            continue;
        }
        total += w;
        let c = item.credit();
        *c += w;
        if best.is_none_or(|(_, b)| *c > b) {
            best = Some((i, *c));
        }
    }
    let (i, _) = best?;
    *items[i].credit() -= total;
    Some(i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    struct W(i64, i64);

    impl Weighted for W {
        fn weight(&self) -> i64 {
            self.0
        }
        fn credit(&mut self) -> &mut i64 {
            &mut self.1
        }
    }

    fn counts(weights: &[i64], n: usize) -> Vec<usize> {
        let mut items: Vec<W> = weights.iter().map(|&w| W(w, 0)).collect();
        let mut c = vec![0; weights.len()];
        for _ in 0..n {
            c[pick(&mut items).unwrap()] += 1;
        }
        c
    }

    #[test]
    fn quarter_three_quarters() {
        assert_eq!(counts(&[250_000, 750_000], 10_000), vec![2500, 7500]);
    }

    #[test]
    fn sixty_forty() {
        assert_eq!(counts(&[600_000, 400_000], 10_000), vec![6000, 4000]);
    }

    #[test]
    fn zero_weight_never_chosen() {
        assert_eq!(counts(&[0, 5, 0], 100), vec![0, 100, 0]);
        let mut none: Vec<W> = vec![W(0, 0)];
        assert_eq!(pick(&mut none), None);
    }

    proptest! {
        #[test]
        fn every_prefix_within_one_packet(
            weights in proptest::collection::vec(0i64..1000, 1..6),
            n in 1usize..3000,
        ) {
            let total: i64 = weights.iter().sum();
            prop_assume!(total > 0);
            let mut items: Vec<W> = weights.iter().map(|&w| W(w, 0)).collect();
            let mut c = vec![0i64; weights.len()];
            for k in 1..=n as i64 {
                c[pick(&mut items).unwrap()] += 1;
                for (i, &w) in weights.iter().enumerate() {
                    // |count - k*w/total| <= 1, in integers.
                    prop_assert!((c[i] * total - k * w).abs() <= total);
                }
            }
        }
    }
}
