//! Training-time augmentation: joint random horizontal flip.

use ndarray::{s, Array2, Array3};
use rand::{Rng, RngExt};

use crate::types::Sample;

/// Flips image, labels and depth together with probability 0.5.
pub fn augment<R: Rng + ?Sized>(sample: &Sample, rng: &mut R) -> Sample {
    if rng.random_bool(0.5) {
        flip_horizontal(sample)
    } else {
        sample.clone()
    }
}

/// Mirrors every map of the sample: column `j` moves to `W - 1 - j`.
pub fn flip_horizontal(sample: &Sample) -> Sample {
    Sample {
        id: sample.id.clone(),
        domain: sample.domain,
        image: flip3(&sample.image),
        depth: sample.depth.as_ref().map(flip2),
        labels: sample.labels.as_ref().map(flip2),
    }
}

fn flip3(x: &Array3<f32>) -> Array3<f32> {
    x.slice(s![.., ..;-1, ..]).to_owned()
}

fn flip2<T: Clone>(x: &Array2<T>) -> Array2<T> {
    x.slice(s![.., ..;-1]).to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Domain;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(h: usize, w: usize, seed: u64) -> Sample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let image = Array3::from_shape_fn((h, w, 3), |_| rng.random_range(-1.0f32..1.0));
        let depth = Array2::from_shape_fn((h, w), |_| rng.random_range(0.0f32..80.0));
        let labels = Array2::from_shape_fn((h, w), |_| rng.random_range(0u8..4));
        Sample::new("s", Domain::Source, image, Some(depth), Some(labels)).unwrap()
    }

    #[test]
    fn flip_maps_column_j_to_mirror() {
        let s = sample(3, 5, 1);
        let f = flip_horizontal(&s);
        for y in 0..3 {
            for x in 0..5 {
                assert_eq!(f.labels.as_ref().unwrap()[[y, x]], s.labels.as_ref().unwrap()[[y, 4 - x]]);
                assert_eq!(f.depth.as_ref().unwrap()[[y, x]], s.depth.as_ref().unwrap()[[y, 4 - x]]);
                for c in 0..3 {
                    assert_eq!(f.image[[y, x, c]], s.image[[y, 4 - x, c]]);
                }
            }
        }
    }

    #[test]
    fn seeded_decisions_repeat() {
        let s = sample(2, 4, 2);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| augment(&s, &mut rng) != s).collect::<Vec<_>>()
        };
        let a = run(9);
        assert_eq!(a, run(9));
        let flips = a.iter().filter(|&&f| f).count();
        assert!((10..=40).contains(&flips), "{flips} flips of 50");
    }

    proptest! {
        #[test]
        fn flip_is_involution_and_preserves_multisets(h in 1usize..6, w in 1usize..7, seed in 0u64..1000) {
            let s = sample(h, w, seed);
            let f = flip_horizontal(&s);
            prop_assert_eq!(&flip_horizontal(&f), &s);
            let mut a: Vec<u8> = s.labels.as_ref().unwrap().iter().copied().collect();
            let mut b: Vec<u8> = f.labels.as_ref().unwrap().iter().copied().collect();
            a.sort_unstable();
            b.sort_unstable();
            prop_assert_eq!(a, b);
            let mut a: Vec<f32> = s.depth.as_ref().unwrap().iter().copied().collect();
            let mut b: Vec<f32> = f.depth.as_ref().unwrap().iter().copied().collect();
            a.sort_by(f32::total_cmp);
            b.sort_by(f32::total_cmp);
            prop_assert_eq!(a, b);
        }
    }
}
