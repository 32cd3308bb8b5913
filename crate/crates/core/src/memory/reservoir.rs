use rand::Rng;

/// Uniform selection of `min(n, budget)` pool indices without replacement,
/// streamed with Algorithm R.
pub fn reservoir_update<R: Rng + ?Sized>(pool_len: usize, budget: usize, rng: &mut R) -> Vec<usize> {
    let mut reservoir: Vec<usize> = (0..pool_len.min(budget)).collect();
    for i in budget..pool_len {
        let j = rng.random_range(0..=i);
        if j < budget {
            reservoir[j] = i;
        }
    }
    reservoir
}
