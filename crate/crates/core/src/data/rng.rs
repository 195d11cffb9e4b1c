use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for one sample in one epoch, independent of processing order.
pub fn sample_rng(seed: u64, image_id: &str, epoch: u64) -> ChaCha8Rng {
    let key =
        splitmix(splitmix(seed) ^ fnv1a(image_id.as_bytes()) ^ splitmix(epoch.wrapping_add(1)));
    ChaCha8Rng::seed_from_u64(key)
}
