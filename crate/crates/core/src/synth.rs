//! Seeded synthetic catalog modeled on a Q&A site: users, posts and six
//! tables hanging off them, with Zipf-skewed foreign keys and correlated
//! attributes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Zipf};

use crate::catalog::{Catalog, CatalogError, Column, ColumnKind, ColumnRef, JoinEdge, KeyRole, TableData};

const DAYS: f64 = 3650.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    /// Row-count multiplier. At 1.0 the largest table has 10^4 rows.
    pub scale: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { seed: 42, scale: 1.0 }
    }
}

fn rows(base: usize, scale: f64) -> usize {
    ((base as f64 * scale).round() as usize).max(2)
}

fn cat(name: &str, v: Vec<Option<f64>>) -> Column {
    Column::from_options(name, ColumnKind::Categorical, v)
}

fn num(name: &str, v: Vec<Option<f64>>) -> Column {
    Column::from_options(name, ColumnKind::Continuous, v)
}

fn ids(n: usize) -> Vec<Option<f64>> {
    (1..=n).map(|i| Some(i as f64)).collect()
}

/// Draws a 1-based rank from a Zipf law and maps it through `by_rank`.
struct Skewed {
    zipf: Zipf<f64>,
    by_rank: Vec<f64>,
}

impl Skewed {
    fn new(by_rank: Vec<f64>, exponent: f64) -> Skewed {
        Skewed {
            zipf: Zipf::new(by_rank.len() as u64, exponent).expect("valid zipf"),
            by_rank,
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        let r = self.zipf.sample(rng) as usize;
        self.by_rank[r.clamp(1, self.by_rank.len()) - 1]
    }
}

fn pick(rng: &mut ChaCha8Rng, choices: &[(f64, f64)]) -> f64 {
    let total: f64 = choices.iter().map(|c| c.1).sum();
    let mut x = rng.gen::<f64>() * total;
    for &(v, w) in choices {
        if x < w {
            return v;
        }
        x -= w;
    }
    choices.last().unwrap().0
}

fn day_after(rng: &mut ChaCha8Rng, start: f64) -> f64 {
    (start + rng.gen::<f64>().powi(2) * (DAYS - start)).floor()
}

pub fn stats_like(config: SynthConfig) -> Result<Catalog, CatalogError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let s = config.scale;
    let noise = LogNormal::new(0.0, 0.6).unwrap();

    // Low user ids are old, reputable and active.
    let n_u = rows(2000, s);
    let mut rep = Vec::with_capacity(n_u);
    let mut u_date = Vec::with_capacity(n_u);
    let mut views = Vec::with_capacity(n_u);
    let mut up = Vec::with_capacity(n_u);
    let mut down = Vec::with_capacity(n_u);
    for i in 1..=n_u {
        let r = (20_000.0 / (i as f64).powf(1.1) * noise.sample(&mut rng)).floor() + 1.0;
        rep.push(r);
        let d = (i as f64 / n_u as f64 * DAYS * 0.9 + rng.gen_range(0.0..0.1 * DAYS)).floor();
        u_date.push(d);
        views.push((r.sqrt() * 8.0 * noise.sample(&mut rng)).floor());
        up.push((r / 12.0 * noise.sample(&mut rng)).floor());
        down.push(if rng.gen_bool(0.7) {
            0.0
        } else {
            (r.ln() * noise.sample(&mut rng)).floor()
        });
    }
    let user_key = Skewed::new((1..=n_u).map(|i| i as f64).collect(), 1.05);
    let users = TableData::new(
        "users",
        vec![
            cat("Id", ids(n_u)),
            num("Reputation", rep.iter().copied().map(Some).collect()),
            num("CreationDate", u_date.iter().copied().map(Some).collect()),
            num("Views", views.into_iter().map(Some).collect()),
            num("UpVotes", up.into_iter().map(Some).collect()),
            num("DownVotes", down.into_iter().map(Some).collect()),
        ],
    )?;

    let n_p = rows(8000, s);
    let mut owner = Vec::with_capacity(n_p);
    let mut ptype = Vec::with_capacity(n_p);
    let mut p_date = Vec::with_capacity(n_p);
    let mut score = Vec::with_capacity(n_p);
    let mut view_count = Vec::with_capacity(n_p);
    let mut answers = Vec::with_capacity(n_p);
    let mut comment_count = Vec::with_capacity(n_p);
    let mut favorites = Vec::with_capacity(n_p);
    for _ in 0..n_p {
        let o = user_key.draw(&mut rng);
        let orep = rep[o as usize - 1];
        owner.push(if rng.gen_bool(0.03) { None } else { Some(o) });
        let t = pick(&mut rng, &[(1.0, 0.55), (2.0, 0.42), (4.0, 0.02), (5.0, 0.01)]);
        ptype.push(Some(t));
        p_date.push(Some(day_after(&mut rng, u_date[o as usize - 1])));
        let sc = ((orep.ln() + 1.0) * noise.sample(&mut rng) - 2.0).floor().max(-3.0);
        score.push(Some(sc));
        view_count.push((t == 1.0).then(|| ((sc + 4.0).powi(2) * 20.0 * noise.sample(&mut rng)).floor()));
        answers.push((t == 1.0).then(|| (sc.max(0.0).sqrt() * noise.sample(&mut rng)).floor()));
        comment_count.push(Some(((sc + 3.0) * 0.4 * noise.sample(&mut rng)).floor()));
        favorites.push((sc > 3.0).then(|| ((sc - 3.0) * noise.sample(&mut rng)).floor()));
    }
    // Popular posts are the high-scoring ones.
    let mut by_score: Vec<usize> = (0..n_p).collect();
    by_score.sort_by(|&a, &b| score[b].unwrap().total_cmp(&score[a].unwrap()).then(a.cmp(&b)));
    let post_key = Skewed::new(by_score.iter().map(|&i| (i + 1) as f64).collect(), 1.0);
    let post_date = |id: f64| p_date[id as usize - 1].unwrap();
    let posts = TableData::new(
        "posts",
        vec![
            cat("Id", ids(n_p)),
            cat("PostTypeId", ptype),
            num("CreationDate", p_date.clone()),
            num("Score", score.clone()),
            num("ViewCount", view_count),
            num("AnswerCount", answers),
            num("CommentCount", comment_count),
            num("FavoriteCount", favorites),
            cat("OwnerUserId", owner),
        ],
    )?;

    let n_c = rows(10_000, s);
    let (mut c_post, mut c_user, mut c_score, mut c_date) = (vec![], vec![], vec![], vec![]);
    for _ in 0..n_c {
        let p = post_key.draw(&mut rng);
        c_post.push(Some(p));
        c_user.push(if rng.gen_bool(0.02) {
            None
        } else {
            Some(user_key.draw(&mut rng))
        });
        let psc = score[p as usize - 1].unwrap();
        c_score.push(Some(if rng.gen_bool(0.75) {
            0.0
        } else {
            (psc.max(0.0).sqrt() * noise.sample(&mut rng)).floor()
        }));
        c_date.push(Some(day_after(&mut rng, post_date(p))));
    }
    let comments = TableData::new(
        "comments",
        vec![
            cat("Id", ids(n_c)),
            cat("PostId", c_post),
            num("Score", c_score),
            num("CreationDate", c_date),
            cat("UserId", c_user),
        ],
    )?;

    let n_h = rows(10_000, s);
    let (mut h_type, mut h_post, mut h_user, mut h_date) = (vec![], vec![], vec![], vec![]);
    for _ in 0..n_h {
        let p = post_key.draw(&mut rng);
        h_post.push(Some(p));
        h_type.push(Some(pick(
            &mut rng,
            &[
                (2.0, 0.3),
                (1.0, 0.2),
                (3.0, 0.2),
                (5.0, 0.15),
                (6.0, 0.08),
                (4.0, 0.05),
                (10.0, 0.02),
            ],
        )));
        h_user.push(if rng.gen_bool(0.05) {
            None
        } else {
            Some(user_key.draw(&mut rng))
        });
        h_date.push(Some(day_after(&mut rng, post_date(p))));
    }
    let post_history = TableData::new(
        "postHistory",
        vec![
            cat("Id", ids(n_h)),
            cat("PostHistoryTypeId", h_type),
            cat("PostId", h_post),
            num("CreationDate", h_date),
            cat("UserId", h_user),
        ],
    )?;

    let n_v = rows(10_000, s);
    let (mut v_post, mut v_type, mut v_user, mut v_bounty, mut v_date) = (vec![], vec![], vec![], vec![], vec![]);
    for _ in 0..n_v {
        let p = post_key.draw(&mut rng);
        v_post.push(Some(p));
        let t = pick(
            &mut rng,
            &[(2.0, 0.7), (1.0, 0.1), (3.0, 0.05), (5.0, 0.12), (8.0, 0.03)],
        );
        v_type.push(Some(t));
        v_user.push((t == 5.0 || t == 8.0).then(|| user_key.draw(&mut rng)));
        v_bounty.push((t == 8.0).then(|| pick(&mut rng, &[(50.0, 0.5), (100.0, 0.3), (200.0, 0.15), (500.0, 0.05)])));
        v_date.push(Some(day_after(&mut rng, post_date(p))));
    }
    let votes = TableData::new(
        "votes",
        vec![
            cat("Id", ids(n_v)),
            cat("PostId", v_post),
            cat("VoteTypeId", v_type),
            num("CreationDate", v_date),
            cat("UserId", v_user),
            num("BountyAmount", v_bounty),
        ],
    )?;

    let n_b = rows(6000, s);
    let (mut b_user, mut b_date) = (vec![], vec![]);
    for _ in 0..n_b {
        let u = user_key.draw(&mut rng);
        b_user.push(Some(u));
        b_date.push(Some(day_after(&mut rng, u_date[u as usize - 1])));
    }
    let badges = TableData::new(
        "badges",
        vec![cat("Id", ids(n_b)), cat("UserId", b_user), num("Date", b_date)],
    )?;

    let n_l = rows(1500, s);
    let (mut l_post, mut l_rel, mut l_type, mut l_date) = (vec![], vec![], vec![], vec![]);
    for _ in 0..n_l {
        let p = post_key.draw(&mut rng);
        l_post.push(Some(p));
        l_rel.push(Some(post_key.draw(&mut rng)));
        l_type.push(Some(pick(&mut rng, &[(1.0, 0.85), (3.0, 0.15)])));
        l_date.push(Some(day_after(&mut rng, post_date(p))));
    }
    let post_links = TableData::new(
        "postLinks",
        vec![
            cat("Id", ids(n_l)),
            num("CreationDate", l_date),
            cat("PostId", l_post),
            cat("RelatedPostId", l_rel),
            cat("LinkTypeId", l_type),
        ],
    )?;

    let n_t = rows(800, s);
    let (mut t_count, mut t_excerpt) = (vec![], vec![]);
    for i in 1..=n_t {
        t_count.push(Some((3000.0 / i as f64 * noise.sample(&mut rng)).floor() + 1.0));
        t_excerpt.push(rng.gen_bool(0.6).then(|| rng.gen_range(1..=n_p) as f64));
    }
    let tags = TableData::new(
        "tags",
        vec![
            cat("Id", ids(n_t)),
            num("Count", t_count),
            cat("ExcerptPostId", t_excerpt),
        ],
    )?;

    let e = |a: (&str, &str), b: (&str, &str), role| {
        JoinEdge::new(ColumnRef::new(a.0, a.1), ColumnRef::new(b.0, b.1), role)
    };
    use KeyRole::{FkFk, PkFk};
    let edges = vec![
        e(("users", "Id"), ("posts", "OwnerUserId"), PkFk),
        e(("users", "Id"), ("badges", "UserId"), PkFk),
        e(("users", "Id"), ("comments", "UserId"), PkFk),
        e(("users", "Id"), ("postHistory", "UserId"), PkFk),
        e(("users", "Id"), ("votes", "UserId"), PkFk),
        e(("posts", "Id"), ("comments", "PostId"), PkFk),
        e(("posts", "Id"), ("postHistory", "PostId"), PkFk),
        e(("posts", "Id"), ("votes", "PostId"), PkFk),
        e(("posts", "Id"), ("postLinks", "PostId"), PkFk),
        e(("posts", "Id"), ("tags", "ExcerptPostId"), PkFk),
        e(("comments", "UserId"), ("badges", "UserId"), FkFk),
        e(("votes", "PostId"), ("postLinks", "RelatedPostId"), FkFk),
    ];
    Catalog::new(
        vec![users, posts, comments, post_history, votes, badges, post_links, tags],
        edges,
    )
}
