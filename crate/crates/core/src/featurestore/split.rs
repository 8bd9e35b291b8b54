use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{derive, tag, SplitMix64};

/// How per-writer records are picked for development pairs, references and
/// claims.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectionOrder {
    /// Seeded random selection.
    #[default]
    Random,
    /// Records taken in `seq_index` order: development genuines are the first
    /// `dev_genuine_per_user`, references the first `refs_per_user` and
    /// claim `j` comes from the session right after the references.
    Chronological,
}

impl std::str::FromStr for SelectionOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(SelectionOrder::Random),
            "chronological" => Ok(SelectionOrder::Chronological),
            _ => Err(Error::Config(format!(
                "selection order must be random or chronological, got {s:?}"
            ))),
        }
    }
}

impl std::fmt::Display for SelectionOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SelectionOrder::Random => "random",
            SelectionOrder::Chronological => "chronological",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitConfig {
    pub dev_user_count: usize,
    pub dev_genuine_per_user: usize,
    pub exploit_user_count: usize,
    pub refs_per_user: usize,
    pub claims_per_user: usize,
    pub selection: SelectionOrder,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            dev_user_count: 50,
            dev_genuine_per_user: 12,
            exploit_user_count: 100,
            refs_per_user: 12,
            claims_per_user: 10,
            selection: SelectionOrder::Random,
            seed: 1,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.dev_genuine_per_user < 2 || self.dev_genuine_per_user % 2 != 0 {
            return bad("dev_genuine_per_user must be even and >= 2");
        }
        if self.refs_per_user == 0 {
            return bad("refs_per_user must be >= 1");
        }
        if self.claims_per_user == 0 {
            return bad("claims_per_user must be >= 1");
        }
        Ok(())
    }

    pub(crate) fn dev_eligible(&self, genuine: usize) -> bool {
        genuine >= self.dev_genuine_per_user
    }

    pub(crate) fn exploit_eligible(&self, genuine: usize, skilled: usize) -> bool {
        genuine >= self.refs_per_user + self.claims_per_user && skilled >= self.claims_per_user
    }
}

/// Disjoint development and exploitation writer sets, each sorted by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserSplit {
    pub dev: Vec<u32>,
    pub exploit: Vec<u32>,
}

/// Split writers into disjoint development and exploitation sets.
///
/// Writers are visited in a seeded random order. The exploitation set takes
/// the first `exploit_user_count` writers with enough records for references
/// and claims; the development set takes the next `dev_user_count` eligible
/// writers among the rest. For a fixed seed the exploitation set therefore
/// does not depend on `dev_user_count`.
pub fn split_users(dataset: &Dataset, cfg: &SplitConfig) -> Result<UserSplit> {
    cfg.validate()?;
    let need = cfg.dev_user_count + cfg.exploit_user_count;
    if need > dataset.writer_count() {
        return Err(Error::Data(format!(
            "split needs {need} writers ({} dev + {} exploit), dataset has {}",
            cfg.dev_user_count,
            cfg.exploit_user_count,
            dataset.writer_count()
        )));
    }
    let mut order: Vec<u32> = dataset.writer_ids().collect();
    SplitMix64::new(derive(cfg.seed, &[tag::SPLIT])).shuffle(&mut order);

    let mut exploit = Vec::with_capacity(cfg.exploit_user_count);
    let mut rest = Vec::with_capacity(order.len());
    for id in order {
        let w = dataset.writer(id).expect("indexed writer");
        if exploit.len() < cfg.exploit_user_count
            && cfg.exploit_eligible(w.genuine.len(), w.skilled.len())
        {
            exploit.push(id);
        } else {
            rest.push(id);
        }
    }
    if exploit.len() < cfg.exploit_user_count {
        return Err(Error::Data(format!(
            "only {} writers have >= {} genuine and >= {} skilled signatures, {} exploitation users requested",
            exploit.len(),
            cfg.refs_per_user + cfg.claims_per_user,
            cfg.claims_per_user,
            cfg.exploit_user_count
        )));
    }
    let mut dev: Vec<u32> = rest
        .into_iter()
        .filter(|&id| cfg.dev_eligible(dataset.writer(id).expect("indexed writer").genuine.len()))
        .take(cfg.dev_user_count)
        .collect();
    if dev.len() < cfg.dev_user_count {
        return Err(Error::Data(format!(
            "only {} remaining writers have >= {} genuine signatures, {} development users requested",
            dev.len(),
            cfg.dev_genuine_per_user,
            cfg.dev_user_count
        )));
    }
    dev.sort_unstable();
    exploit.sort_unstable();
    Ok(UserSplit { dev, exploit })
}
