//! Exact binomial coefficients from a cached factorial table.

use rug::Integer;

#[derive(Debug, Clone)]
pub struct BinomialTable {
    factorials: Vec<Integer>,
}

impl BinomialTable {
    /// Table able to answer `C(a, b)` for every `a <= max_n`.
    pub fn new(max_n: usize) -> Self {
        let mut factorials = Vec::with_capacity(max_n + 1);
        factorials.push(Integer::from(1));
        for i in 1..=max_n {
            let next = Integer::from(&factorials[i - 1] * i as u64);
            factorials.push(next);
        }
        Self { factorials }
    }

    pub fn max_n(&self) -> usize {
        self.factorials.len() - 1
    }

    /// `C(a, b)`, zero when `b > a`.
    pub fn get(&self, a: usize, b: usize) -> Integer {
        if b > a {
            return Integer::new();
        }
        let denom = Integer::from(&self.factorials[b] * &self.factorials[a - b]);
        Integer::from(&self.factorials[a]).div_exact(&denom)
    }
}
