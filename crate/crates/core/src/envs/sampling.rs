use rand::seq::index;

use super::Environment;
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::types::{ItemId, Observation, ObservationSet, UserId};

/// `n` distinct (user, item) pairs drawn uniformly without replacement and
/// rated with dynamics frozen; every tuple is stamped timestep 0.
pub fn sample_initial(env: &mut dyn Environment, n: usize, rng: &mut Stream) -> Result<ObservationSet> {
    let (nu, ni) = (env.n_users(), env.n_items());
    let total = nu * ni;
    if n > total {
        return Err(Error::Contract(format!(
            "cannot sample {n} initial ratings from a {nu}x{ni} matrix"
        )));
    }
    let mut set = ObservationSet::new(nu, ni);
    for flat in index::sample(rng, total, n) {
        let (user, item) = (UserId::from(flat / ni), ItemId::from(flat % ni));
        let r = env.rate_static(user, item);
        set.insert(Observation::new(user, item, r, 0))?;
    }
    Ok(set)
}

/// `count` distinct users for one timestep, uniform over all users.
pub fn sample_online_users(env: &dyn Environment, count: usize, rng: &mut Stream) -> Result<Vec<UserId>> {
    let n = env.n_users();
    if count == 0 {
        return Err(Error::Contract("online user count must be >= 1".into()));
    }
    if count > n {
        return Err(Error::Contract(format!("cannot sample {count} distinct users from {n}")));
    }
    Ok(index::sample(rng, n, count).into_iter().map(UserId::from).collect())
}
