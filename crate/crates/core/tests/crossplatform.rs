mod common;

use std::collections::BTreeSet;

use common::*;
use hacknet::crossplatform::{
    cross_egonet, forum_egonet, match_usernames, normalize_username, scatter_csv, scatter_series, CrossPlatformError,
};
use hacknet::graph::build_aa_graph;
use hacknet::ingest::{Corpus, ForumCorpus, ForumPost, InteractionKind};
use proptest::prelude::*;

fn post(forum: &str, thread: &str, user: &str) -> ForumPost {
    thread_local!(static NEXT: std::cell::Cell<usize> = const { std::cell::Cell::new(0) });
    let id = NEXT.with(|n| {
        n.set(n.get() + 1);
        n.get()
    });
    ForumPost {
        forum_id: forum.into(),
        thread_id: thread.into(),
        post_id: format!("p{id}"),
        username: user.into(),
        content: String::new(),
    }
}

fn forums(posts: Vec<ForumPost>) -> ForumCorpus {
    let (f, rejects) = ForumCorpus::from_posts(posts);
    assert!(rejects.is_empty());
    f
}

/// Ego with 898 distinct AA neighbors reached through every label and both
/// directions, with overlaps, and 224 distinct (forum, user) co-thread pairs.
fn misterch0c_fixture() -> (Corpus, ForumCorpus) {
    let mut authors = vec![author("ego", "MisterCh0c")];
    let mut repos = vec![repo("ego_r", "ego", None, "")];
    let mut inter = Vec::new();
    for i in 0..898 {
        let id = format!("n{i}");
        authors.push(author(&id, &format!("gh{i}")));
        repos.push(repo(&format!("r{i}"), &id, None, ""));
        match i % 4 {
            0 => inter.push(follow(&id, "ego")),
            1 => inter.push(follow("ego", &id)),
            2 => inter.push(on_repo(InteractionKind::Fork, &id, "ego_r")),
            _ => inter.push(on_repo(InteractionKind::Comment, "ego", &format!("r{i}"))),
        }
        if i % 10 == 0 {
            inter.push(on_repo(InteractionKind::Contribute, &id, "ego_r"));
        }
    }
    authors.push(author("far", "stranger"));
    inter.push(follow("far", "n0"));
    inter.push(on_repo(InteractionKind::Fork, "ego", "ego_r"));
    let (corpus, rejects) = Corpus::from_records(authors, repos, inter);
    assert!(rejects.is_empty());

    let mut posts = Vec::new();
    // 200 HTS users over four threads, each user in one or two of them.
    for t in 0..4 {
        posts.push(post("HTS", &format!("t{t}"), if t % 2 == 0 { "misterch0c" } else { " MISTERCH0C" }));
    }
    for u in 0..200 {
        posts.push(post("HTS", &format!("t{}", u % 4), &format!("fu{u}")));
        if u % 3 == 0 {
            posts.push(post("HTS", &format!("t{}", (u + 1) % 4), &format!("FU{u}")));
        }
    }
    // 24 OC users, two sharing names with HTS users.
    posts.push(post("OC", "x", "misterch0c"));
    for u in 0..22 {
        posts.push(post("OC", "x", &format!("oc{u}")));
    }
    posts.push(post("OC", "x", "fu0"));
    posts.push(post("OC", "x", "fu1"));
    // Threads without the ego contribute nothing.
    posts.push(post("OC", "y", "outsider"));
    posts.push(post("HTS", "t9", "fu5"));
    (corpus, forums(posts))
}

#[test]
fn misterch0c_scatter_row() {
    let (corpus, fs) = misterch0c_fixture();
    let aa = build_aa_graph(&corpus);
    let matches = match_usernames(&corpus, &fs);
    assert_eq!(matches.usernames(), vec!["misterch0c"]);
    assert_eq!(matches.per_forum.get("HTS"), Some(&1));
    assert_eq!(matches.per_forum.get("OC"), Some(&1));
    let ego = cross_egonet("misterch0c", &corpus, &aa, &fs).unwrap();
    assert!(!ego.github_neighbors.contains("ego"));
    assert!(!ego.github_neighbors.contains("far"));
    assert_eq!(ego.post_count, 5);
    let points = scatter_series(&[ego]);
    assert_eq!((points[0].github_degree, points[0].forum_degree), (898, 224));
    assert_eq!(
        String::from_utf8(scatter_csv(&points)).unwrap(),
        "username,github_degree,forum_degree\nmisterch0c,898,224\n"
    );
}

#[test]
fn case_insensitive_exact_matching() {
    let corpus = Corpus::from_records(vec![author("a", "Alice"), author("b", "Alicia ")], vec![], vec![]).0;
    let fs = forums(vec![post("F", "t", "alice"), post("F", "t", "ALICIA"), post("F", "u", "bob")]);
    assert_eq!(match_usernames(&corpus, &fs).usernames(), vec!["alice", "alicia"]);

    let corpus = Corpus::from_records(vec![author("a", "Alice")], vec![], vec![]).0;
    let fs = forums(vec![post("F", "t", "Alicia")]);
    assert!(match_usernames(&corpus, &fs).matches.is_empty());
    let aa = build_aa_graph(&corpus);
    assert_eq!(
        cross_egonet("alice", &corpus, &aa, &fs).unwrap_err(),
        CrossPlatformError::Unmatched("alice".into())
    );
}

#[test]
fn forum_egonet_examples() {
    let fs = forums(vec![
        post("F", "T1", "ego"),
        post("F", "T1", "X"),
        post("F", "T2", "ego"),
        post("F", "T2", "x"),
        post("F", "T2", "Z"),
        post("F", "T3", "W"),
    ]);
    let n = forum_egonet("EGO", &fs);
    let expected: BTreeSet<_> = [("F", "x"), ("F", "z")].map(|(f, u)| (f.to_string(), u.to_string())).into();
    assert_eq!(n, expected);
    assert!(forum_egonet("nobody", &fs).is_empty());
}

#[test]
fn isolated_github_ego() {
    let corpus = Corpus::from_records(vec![author("a", "3vilp4wn"), author("b", "other")], vec![], vec![]).0;
    let fs = forums(vec![post("HTS", "t", "3vilp4wn"), post("HTS", "t", "p"), post("HTS", "t", "q")]);
    let aa = build_aa_graph(&corpus);
    let e = cross_egonet("3VILP4WN", &corpus, &aa, &fs).unwrap();
    assert_eq!((e.github_degree(), e.forum_degree()), (0, 2));
    assert!(scatter_series(&[]).is_empty());
}

#[test]
fn bundled_synthetic_matches() {
    let d = synthetic_dir();
    let corpus = hacknet::ingest::load_dataset(&d.join("authors.csv"), &d.join("repos.jsonl"), &d.join("interactions.csv"))
        .unwrap()
        .corpus;
    let fs = hacknet::ingest::load_forums(&d.join("forums.csv")).unwrap().forums;
    let m = match_usernames(&corpus, &fs);
    assert!(!m.matches.is_empty());
    let aa = build_aa_graph(&corpus);
    for name in m.usernames() {
        let e = cross_egonet(name, &corpus, &aa, &fs).unwrap();
        assert!(!e.forum_neighbors.iter().any(|(_, u)| u == name));
    }
}

fn arb_forums() -> impl Strategy<Value = ForumCorpus> {
    prop::collection::vec((0usize..2, 0usize..4, 0usize..6, any::<bool>()), 0..40).prop_map(|rows| {
        let posts = rows
            .into_iter()
            .enumerate()
            .map(|(i, (f, t, u, upper))| {
                let name = if upper { format!("U{u}") } else { format!("u{u}") };
                ForumPost {
                    forum_id: format!("f{f}"),
                    thread_id: format!("t{t}"),
                    post_id: format!("p{i}"),
                    username: name,
                    content: String::new(),
                }
            })
            .collect();
        ForumCorpus::from_posts(posts).0
    })
}

proptest! {
    #[test]
    fn co_thread_is_symmetric(fs in arb_forums()) {
        let names: BTreeSet<String> = fs.posts().iter().map(|p| normalize_username(&p.username)).collect();
        for x in &names {
            let ex = forum_egonet(x, &fs);
            prop_assert!(!ex.iter().any(|(_, u)| u == x));
            for y in &names {
                let ey = forum_egonet(y, &fs);
                for f in fs.forum_ids() {
                    let xy = ex.contains(&(f.to_string(), y.clone()));
                    let yx = ey.contains(&(f.to_string(), x.clone()));
                    prop_assert_eq!(xy, yx);
                }
            }
        }
    }

    #[test]
    fn normalization_is_idempotent(s in "\\PC{0,12}", ascii in "[ a-zA-Z0-9_]{0,12}") {
        let once = normalize_username(&s);
        prop_assert_eq!(normalize_username(&once), once);
        prop_assert_eq!(normalize_username(&ascii.to_uppercase()), normalize_username(&ascii.to_lowercase()));
    }

    #[test]
    fn github_neighbors_match_adjacency(c in arb_corpus(), ego in 0usize..8) {
        let aa = build_aa_graph(&c);
        let ego = ego % c.authors().len();
        let ego_name = c.authors()[ego].username.clone();
        let fs = ForumCorpus::from_posts(vec![post("F", "t", &ego_name)]).0;
        let e = cross_egonet(&ego_name, &c, &aa, &fs).unwrap();
        let ego_id = &c.authors()[ego].author_id;
        let mut expected = BTreeSet::new();
        for edge in aa.edges() {
            let (s, d) = (&aa.nodes()[edge.src], &aa.nodes()[edge.dst]);
            if s == ego_id {
                expected.insert(d.clone());
            }
            if d == ego_id {
                expected.insert(s.clone());
            }
        }
        expected.remove(ego_id);
        prop_assert_eq!(e.github_neighbors, expected);
    }
}
