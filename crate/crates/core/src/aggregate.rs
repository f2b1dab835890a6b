//! Borda aggregation of rankings into `[0, 1]` reputation scores.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use tracing::warn;

use crate::error::{Error, Result, Stage};
use crate::mapping::OverlapMatrix;
use crate::model::{Asn, ProviderUniverse};
use crate::ranking::Ranking;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constituent {
    pub feed_id: String,
    pub measure: String,
    pub weight: BigRational,
}

/// Aggregated scores, sorted worst first (ties by ascending ASN).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreMap {
    pub scores: Vec<(Asn, BigRational)>,
    pub constituent: Vec<Constituent>,
    /// Effective rank of each provider in each constituent ranking, in constituent order.
    pub ranks: BTreeMap<Asn, Vec<u32>>,
    /// (provider, constituent index) pairs whose rank was substituted by the zero rank.
    pub substitutions: Vec<(Asn, usize)>,
}

impl ScoreMap {
    pub fn score(&self, asn: Asn) -> Option<&BigRational> {
        self.scores.iter().find(|(a, _)| *a == asn).map(|(_, s)| s)
    }

    pub fn score_f64(&self, asn: Asn) -> Option<f64> {
        self.score(asn).map(rational_to_f64)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Providers in worst-first order.
    pub fn order(&self) -> impl Iterator<Item = Asn> + '_ {
        self.scores.iter().map(|(a, _)| *a)
    }
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Weighted mean effective rank divided by `R`, per provider.
///
/// Missing ranks (providers excluded from a ranking) count as that ranking's zero rank.
pub fn borda_aggregate(
    rankings: &[Ranking],
    weights: Option<&[BigRational]>,
    universe: &ProviderUniverse,
) -> Result<ScoreMap> {
    if rankings.is_empty() {
        return Err(Error::data(Stage::Aggregation, "no rankings to aggregate"));
    }
    let weights: Vec<BigRational> = match weights {
        Some(w) if w.len() != rankings.len() => {
            return Err(Error::config(
                Stage::Aggregation,
                format!("{} weights for {} rankings", w.len(), rankings.len()),
            ))
        }
        Some(w) => w.to_vec(),
        None => vec![BigRational::one(); rankings.len()],
    };
    if weights.iter().any(Signed::is_negative) {
        return Err(Error::config(Stage::Aggregation, "negative weight"));
    }
    let weight_sum: BigRational = weights.iter().sum();
    if weight_sum.is_zero() {
        return Err(Error::config(Stage::Aggregation, "weights sum to zero"));
    }
    let r = universe.size();
    for rk in rankings {
        if rk.r != r || rk.ranks.keys().any(|a| !universe.contains(*a)) {
            return Err(Error::data(
                Stage::Aggregation,
                format!("ranking {} is over a different universe", rk.label()),
            ));
        }
    }

    // Scale weights to integers over a common denominator so each score is one division.
    let common: BigInt = weights.iter().map(|w| w.denom().clone()).product();
    let int_weights: Vec<BigInt> = weights.iter().map(|w| w.numer() * (&common / w.denom())).collect();
    let denom: BigInt = int_weights.iter().sum::<BigInt>() * BigInt::from(r);
    let mut scores = Vec::with_capacity(universe.size() as usize);
    let mut ranks = BTreeMap::new();
    let mut substitutions = Vec::new();
    for asn in universe.iter() {
        let mut acc = BigInt::zero();
        let mut row = Vec::with_capacity(rankings.len());
        for (i, (rk, w)) in rankings.iter().zip(&int_weights).enumerate() {
            if !rk.ranks.contains_key(&asn) {
                substitutions.push((asn, i));
            }
            let k = rk.effective_rank(asn);
            row.push(k);
            acc += w * BigInt::from(k);
        }
        scores.push((asn, BigRational::new(acc, denom.clone())));
        ranks.insert(asn, row);
    }
    scores.sort_by(|(a1, s1), (a2, s2)| s2.cmp(s1).then(a1.cmp(a2)));

    Ok(ScoreMap {
        scores,
        constituent: rankings
            .iter()
            .zip(weights)
            .map(|(rk, weight)| Constituent {
                feed_id: rk.feed_id.clone(),
                measure: rk.measure.clone(),
                weight,
            })
            .collect(),
        ranks,
        substitutions,
    })
}

/// Feed weights proportional to each feed's count of exclusive units.
pub fn weights_by_exclusive_volume(overlap: &OverlapMatrix) -> Result<Vec<BigRational>> {
    let total: u64 = overlap.exclusive.iter().sum();
    if total == 0 {
        return Err(Error::data(
            Stage::Aggregation,
            "degenerate weighting: no feed has exclusive units",
        ));
    }
    Ok(overlap
        .feeds
        .iter()
        .zip(&overlap.exclusive)
        .map(|(feed, &ex)| {
            if ex == 0 {
                warn!(feed = %feed, "feed has no exclusive units; weight 0");
            }
            BigRational::new(BigInt::from(ex), BigInt::from(total))
        })
        .collect())
}
