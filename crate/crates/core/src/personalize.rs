//! Collaborative-filtering relevance: the filtered user-article click
//! matrix, implicit-feedback alternating least squares, and per-user
//! relevance scores on the 0-100 scale.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ArticleId, EventLog, Timestamp, UserId, SECS_PER_DAY, SECS_PER_HOUR};
use crate::ranker::{min_max_scale, NEUTRAL_SCORE};

/// Click counts of subscriber users on articles that passed the click
/// threshold within the training window.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    users: Vec<UserId>,
    articles: Vec<ArticleId>,
    /// `(row, col, clicks)` sorted by row then column.
    cells: Vec<(u32, u32, u32)>,
    pub window_days: f64,
    pub min_article_clicks: u64,
    pub built_at: Timestamp,
}

impl InteractionMatrix {
    /// Builds the matrix from raw `(user, article, clicks)` triples,
    /// dropping articles whose total clicks fall below `min_article_clicks`
    /// and users left without cells. Duplicate pairs are summed.
    pub fn from_counts(
        counts: impl IntoIterator<Item = (UserId, ArticleId, u32)>,
        min_article_clicks: u64,
        window_days: f64,
        built_at: Timestamp,
    ) -> Self {
        let mut pairs: BTreeMap<(UserId, ArticleId), u32> = BTreeMap::new();
        let mut totals: HashMap<ArticleId, u64> = HashMap::new();
        for (u, a, c) in counts {
            if c == 0 {
                continue;
            }
            *totals.entry(a.clone()).or_default() += u64::from(c);
            *pairs.entry((u, a)).or_default() += c;
        }
        pairs.retain(|(_, a), _| totals[a] >= min_article_clicks);

        let mut articles: Vec<ArticleId> = pairs.keys().map(|(_, a)| a.clone()).collect();
        articles.sort();
        articles.dedup();
        let col_of: HashMap<&ArticleId, u32> = articles
            .iter()
            .enumerate()
            .map(|(i, a)| (a, i as u32))
            .collect();

        let mut users: Vec<UserId> = Vec::new();
        let mut cells = Vec::with_capacity(pairs.len());
        for ((u, a), c) in &pairs {
            if users.last() != Some(u) {
                users.push(u.clone());
            }
            cells.push(((users.len() - 1) as u32, col_of[a], *c));
        }
        Self {
            users,
            articles,
            cells,
            window_days,
            min_article_clicks,
            built_at,
        }
    }

    pub fn users(&self) -> &[UserId] {
        &self.users
    }

    pub fn articles(&self) -> &[ArticleId] {
        &self.articles
    }

    /// Non-zero cells as `(row, col, clicks)`.
    pub fn cells(&self) -> &[(u32, u32, u32)] {
        &self.cells
    }

    pub fn get(&self, user: &UserId, article: &ArticleId) -> u32 {
        let (Ok(r), Ok(c)) = (
            self.users.binary_search(user),
            self.articles.binary_search(article),
        ) else {
            return 0;
        };
        self.cells
            .binary_search_by_key(&(r as u32, c as u32), |&(r, c, _)| (r, c))
            .map(|i| self.cells[i].2)
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Counts clicks inside `[now - window_days, now]`, optionally restricted to
/// subscribers, and drops articles with fewer than `min_clicks` clicks.
pub fn build_interaction_matrix(
    log: &EventLog,
    now: Timestamp,
    window_days: f64,
    min_clicks: u64,
    subscribers_only: bool,
) -> Result<InteractionMatrix> {
    if !(window_days > 0.0) {
        return Err(Error::InvalidInput(format!(
            "window_days must be > 0, got {window_days}"
        )));
    }
    let from = now - (window_days * SECS_PER_DAY as f64) as i64;
    let counts = log
        .events
        .iter()
        .filter(|e| e.is_click() && e.at >= from && e.at <= now)
        .filter(|e| !subscribers_only || log.user(&e.user_id).is_some_and(|u| u.subscriber))
        .map(|e| (e.user_id.clone(), e.article_id.clone(), 1));
    Ok(InteractionMatrix::from_counts(
        counts,
        min_clicks,
        window_days,
        now,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlsParams {
    pub factors: usize,
    pub regularization: f64,
    pub iterations: usize,
    /// Confidence slope: `c = 1 + alpha * clicks`.
    pub alpha: f64,
    pub seed: u64,
}

impl Default for AlsParams {
    fn default() -> Self {
        Self {
            factors: 16,
            regularization: 0.1,
            iterations: 15,
            alpha: 40.0,
            seed: 7,
        }
    }
}

impl AlsParams {
    pub fn validate(&self) -> Result<()> {
        if self.factors == 0 {
            return Err(Error::Config("ALS `factors` must be >= 1".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("ALS `iterations` must be >= 1".into()));
        }
        if !(self.regularization > 0.0) || !self.regularization.is_finite() {
            return Err(Error::Config("ALS `regularization` must be > 0".into()));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config("ALS `alpha` must be >= 0".into()));
        }
        Ok(())
    }
}

/// Trained latent factors. Immutable once built; queried concurrently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    pub k: usize,
    pub seed: u64,
    pub trained_at: Timestamp,
    pub users: Vec<UserId>,
    pub articles: Vec<ArticleId>,
    /// Row-major `users.len() x k`.
    pub user_factors: Vec<f64>,
    /// Row-major `articles.len() x k`.
    pub item_factors: Vec<f64>,
    /// Objective value after each iteration.
    pub loss_history: Vec<f64>,
    #[serde(skip)]
    user_index: HashMap<UserId, usize>,
    #[serde(skip)]
    article_index: HashMap<ArticleId, usize>,
}

impl FactorModel {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        k: usize,
        seed: u64,
        trained_at: Timestamp,
        users: Vec<UserId>,
        articles: Vec<ArticleId>,
        user_factors: Vec<f64>,
        item_factors: Vec<f64>,
        loss_history: Vec<f64>,
    ) -> Self {
        let user_index = users
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, u)| (u, i))
            .collect();
        let article_index = articles
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, a)| (a, i))
            .collect();
        Self {
            k,
            seed,
            trained_at,
            users,
            articles,
            user_factors,
            item_factors,
            loss_history,
            user_index,
            article_index,
        }
    }

    /// A model that knows nobody; every relevance query falls back to 50.
    pub fn empty(k: usize, trained_at: Timestamp) -> Self {
        Self::assemble(
            k,
            0,
            trained_at,
            Vec::new(),
            Vec::new(),
            Vec::new(),
            Vec::new(),
            Vec::new(),
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: FactorModel =
            serde_json::from_str(text).map_err(|e| Error::Serialize(e.to_string()))?;
        Ok(Self::assemble(
            m.k,
            m.seed,
            m.trained_at,
            m.users,
            m.articles,
            m.user_factors,
            m.item_factors,
            m.loss_history,
        ))
    }

    pub fn user_vector(&self, user: &UserId) -> Option<&[f64]> {
        self.user_index
            .get(user)
            .map(|&i| &self.user_factors[i * self.k..(i + 1) * self.k])
    }

    pub fn item_vector(&self, article: &ArticleId) -> Option<&[f64]> {
        self.article_index
            .get(article)
            .map(|&i| &self.item_factors[i * self.k..(i + 1) * self.k])
    }

    /// Raw preference estimate, `None` when either side is unknown.
    pub fn predict(&self, user: &UserId, article: &ArticleId) -> Option<f64> {
        Some(dot(self.user_vector(user)?, self.item_vector(article)?))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sparse rows `(other index, clicks)` for one side of the matrix.
fn adjacency(matrix: &InteractionMatrix, by_user: bool) -> Vec<Vec<(usize, f64)>> {
    let n = if by_user {
        matrix.users.len()
    } else {
        matrix.articles.len()
    };
    let mut rows = vec![Vec::new(); n];
    for &(r, c, v) in &matrix.cells {
        if by_user {
            rows[r as usize].push((c as usize, f64::from(v)));
        } else {
            rows[c as usize].push((r as usize, f64::from(v)));
        }
    }
    rows
}

fn gramian(factors: &[f64], k: usize) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(k, k);
    for row in factors.chunks_exact(k) {
        for a in 0..k {
            for b in a..k {
                g[(a, b)] += row[a] * row[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            g[(a, b)] = g[(b, a)];
        }
    }
    g
}

/// One ALS half-step: exact least-squares update of `target` with `fixed`
/// held constant.
fn solve_side(
    rows: &[Vec<(usize, f64)>],
    fixed: &[f64],
    target: &mut [f64],
    k: usize,
    params: &AlsParams,
) -> Result<()> {
    let gram = gramian(fixed, k);
    // Row-major scratch; the system is symmetric so layout does not matter.
    let mut a = vec![0.0; k * k];
    let mut b = vec![0.0; k];
    for (idx, row) in rows.iter().enumerate() {
        a.copy_from_slice(gram.as_slice());
        b.fill(0.0);
        for i in 0..k {
            a[i * k + i] += params.regularization;
        }
        for &(j, clicks) in row {
            let y = &fixed[j * k..(j + 1) * k];
            let conf = 1.0 + params.alpha * clicks;
            for p in 0..k {
                b[p] += conf * y[p];
                let wp = (conf - 1.0) * y[p];
                for (aq, yq) in a[p * k..(p + 1) * k].iter_mut().zip(y) {
                    *aq += wp * yq;
                }
            }
        }
        let chol = DMatrix::from_column_slice(k, k, &a)
            .cholesky()
            .ok_or_else(|| Error::Training("normal equations not positive definite".into()))?;
        let x = chol.solve(&DVector::from_column_slice(&b));
        target[idx * k..(idx + 1) * k].copy_from_slice(x.as_slice());
    }
    Ok(())
}

/// Implicit-feedback objective
/// `sum_{u,i} c_ui (p_ui - x_u.y_i)^2 + lambda (|X|^2 + |Y|^2)` over all
/// user-article pairs, with `p = 1` on observed cells and `0` elsewhere.
pub fn implicit_loss(
    matrix: &InteractionMatrix,
    user_factors: &[f64],
    item_factors: &[f64],
    k: usize,
    params: &AlsParams,
) -> f64 {
    let gram = gramian(item_factors, k);
    let mut loss = 0.0;
    for x in user_factors.chunks_exact(k) {
        let xv = DVector::from_column_slice(x);
        loss += (xv.transpose() * &gram * &xv)[(0, 0)];
    }
    for &(r, c, v) in &matrix.cells {
        let x = &user_factors[r as usize * k..(r as usize + 1) * k];
        let y = &item_factors[c as usize * k..(c as usize + 1) * k];
        let s = dot(x, y);
        let conf = 1.0 + params.alpha * f64::from(v);
        loss += conf * (1.0 - s) * (1.0 - s) - s * s;
    }
    let reg: f64 = user_factors.iter().chain(item_factors).map(|v| v * v).sum();
    loss + params.regularization * reg
}

/// Alternating least squares on the implicit-confidence objective.
/// Deterministic for a given matrix and seed.
pub fn train(
    matrix: &InteractionMatrix,
    params: &AlsParams,
    trained_at: Timestamp,
) -> Result<FactorModel> {
    params.validate()?;
    if matrix.is_empty() {
        return Err(Error::Training("interaction matrix is empty".into()));
    }
    let k = params.factors;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let scale = 0.1 / (k as f64).sqrt();
    let mut xs: Vec<f64> = (0..matrix.users.len() * k)
        .map(|_| rng.random::<f64>() * scale)
        .collect();
    let mut ys: Vec<f64> = (0..matrix.articles.len() * k)
        .map(|_| rng.random::<f64>() * scale)
        .collect();
    let by_user = adjacency(matrix, true);
    let by_item = adjacency(matrix, false);

    let mut history = Vec::with_capacity(params.iterations);
    for _ in 0..params.iterations {
        solve_side(&by_user, &ys, &mut xs, k, params)?;
        solve_side(&by_item, &xs, &mut ys, k, params)?;
        let loss = implicit_loss(matrix, &xs, &ys, k, params);
        if !loss.is_finite() {
            return Err(Error::Training(format!("non-finite loss {loss}")));
        }
        history.push(loss);
    }
    Ok(FactorModel::assemble(
        k,
        params.seed,
        trained_at,
        matrix.users.clone(),
        matrix.articles.clone(),
        xs,
        ys,
        history,
    ))
}

/// Relevance of each candidate for `user` on `[0, 100]`, aligned with
/// `candidates`. Raw dot products are min-max scaled over the known
/// candidates; unknown users or articles get the neutral score 50.
pub fn relevance_scores(model: &FactorModel, user: &UserId, candidates: &[ArticleId]) -> Vec<f64> {
    let mut out = vec![NEUTRAL_SCORE; candidates.len()];
    let Some(x) = model.user_vector(user) else {
        return out;
    };
    let mut known = Vec::new();
    let mut raw = Vec::new();
    for (i, a) in candidates.iter().enumerate() {
        if let Some(y) = model.item_vector(a) {
            known.push(i);
            raw.push(dot(x, y));
        }
    }
    for (i, s) in known.into_iter().zip(min_max_scale(&raw)) {
        out[i] = s;
    }
    out
}

/// Retrain instants `start, start + interval, ...` up to and including
/// `start + horizon_secs`.
pub fn retrain_schedule(
    start: Timestamp,
    horizon_secs: i64,
    interval_hours: f64,
) -> Result<Vec<Timestamp>> {
    if !(interval_hours > 0.0) {
        return Err(Error::InvalidInput(format!(
            "interval_hours must be > 0, got {interval_hours}"
        )));
    }
    let step = (interval_hours * SECS_PER_HOUR as f64).round() as i64;
    if step == 0 {
        return Err(Error::InvalidInput(
            "retrain interval shorter than one second".into(),
        ));
    }
    let end = start + horizon_secs.max(0);
    Ok((0..)
        .map(|j| start + j * step)
        .take_while(|&t| t <= end)
        .collect())
}
