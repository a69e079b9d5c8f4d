//! Brute-force metric implementations written from the definitions, plus the
//! toy-case suite they are checked on.

use askcap::metrics::IdfTable;

pub fn toks(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

pub fn grams<'a>(t: &[&'a str], n: usize) -> Vec<Vec<&'a str>> {
    if t.len() < n {
        return Vec::new();
    }
    (0..=t.len() - n).map(|i| t[i..i + n].to_vec()).collect()
}

pub fn count_of(list: &[Vec<&str>], g: &[&str]) -> usize {
    list.iter().filter(|x| x.as_slice() == g).count()
}

pub fn distinct<'a>(list: &[Vec<&'a str>]) -> Vec<Vec<&'a str>> {
    let mut out: Vec<Vec<&str>> = Vec::new();
    for g in list {
        if !out.contains(g) {
            out.push(g.clone());
        }
    }
    out
}

pub fn oracle_bleu(c: &[&str], refs: &[Vec<&str>], n: usize) -> f64 {
    if c.is_empty() {
        return 0.0;
    }
    let mut prod = 1.0;
    for k in 1..=n {
        let cg = grams(c, k);
        let mut clipped = 0;
        for g in distinct(&cg) {
            let best = refs
                .iter()
                .map(|r| count_of(&grams(r, k), &g))
                .max()
                .unwrap();
            clipped += count_of(&cg, &g).min(best);
        }
        if clipped == 0 {
            return 0.0;
        }
        prod *= clipped as f64 / cg.len() as f64;
    }
    let mut lens: Vec<usize> = refs.iter().map(Vec::len).collect();
    lens.sort_by_key(|&l| (l.abs_diff(c.len()), l));
    let r = lens[0] as f64;
    let bp = if c.len() as f64 > r {
        1.0
    } else {
        (1.0 - r / c.len() as f64).exp()
    };
    bp * prod.powf(1.0 / n as f64)
}

pub fn lcs_brute(a: &[&str], b: &[&str]) -> usize {
    match (a.split_first(), b.split_first()) {
        (Some((x, ra)), Some((y, rb))) => {
            if x == y {
                1 + lcs_brute(ra, rb)
            } else {
                lcs_brute(ra, b).max(lcs_brute(a, rb))
            }
        }
        _ => 0,
    }
}

pub fn oracle_rouge(c: &[&str], refs: &[Vec<&str>]) -> f64 {
    let b2 = 1.2f64 * 1.2;
    let mut best = 0.0f64;
    for r in refs {
        let l = lcs_brute(c, r) as f64;
        if l > 0.0 {
            let p = l / c.len() as f64;
            let rec = l / r.len() as f64;
            best = best.max((1.0 + b2) * p * rec / (rec + b2 * p));
        }
    }
    best
}

pub fn stem_str(w: &str) -> &str {
    w.strip_suffix("s").unwrap_or(w)
}

pub fn oracle_meteor(c: &[&str], refs: &[Vec<&str>]) -> f64 {
    let mut best = 0.0f64;
    for r in refs {
        let mut taken = vec![false; r.len()];
        let mut link: Vec<Option<usize>> = vec![None; c.len()];
        for exact in [true, false] {
            for (i, w) in c.iter().enumerate() {
                if link[i].is_some() {
                    continue;
                }
                for (j, v) in r.iter().enumerate() {
                    let hit = if exact {
                        v == w
                    } else {
                        stem_str(v) == stem_str(w)
                    };
                    if !taken[j] && hit {
                        taken[j] = true;
                        link[i] = Some(j);
                        break;
                    }
                }
            }
        }
        let m = link.iter().flatten().count();
        if m == 0 {
            continue;
        }
        let mut chunks = 0;
        let mut prev: Option<(usize, usize)> = None;
        for (i, j) in link
            .iter()
            .enumerate()
            .filter_map(|(i, j)| j.map(|j| (i, j)))
        {
            match prev {
                Some((pi, pj)) if pi + 1 == i && pj + 1 == j => {}
                _ => chunks += 1,
            }
            prev = Some((i, j));
        }
        let p = m as f64 / c.len() as f64;
        let rec = m as f64 / r.len() as f64;
        let f = 10.0 * p * rec / (rec + 9.0 * p);
        best = best.max(f * (1.0 - 0.5 * (chunks as f64 / m as f64).powi(3)));
    }
    best
}

pub fn oracle_cider(c: &[&str], refs: &[Vec<&str>], docs: &[Vec<Vec<&str>>]) -> f64 {
    let idf = |g: &[&str]| {
        let df = docs
            .iter()
            .filter(|d| {
                d.iter()
                    .any(|r| grams(r, g.len()).iter().any(|x| x.as_slice() == g))
            })
            .count();
        (docs.len() as f64 / df.max(1) as f64).ln()
    };
    let mut total = 0.0;
    for n in 1..=4 {
        let cg = grams(c, n);
        let mut acc = 0.0;
        for r in refs {
            let rg = grams(r, n);
            let mut axis = distinct(&cg);
            axis.extend(distinct(&rg));
            let axis = distinct(&axis);
            let vc: Vec<f64> = axis
                .iter()
                .map(|g| count_of(&cg, g) as f64 * idf(g))
                .collect();
            let vr: Vec<f64> = axis
                .iter()
                .map(|g| count_of(&rg, g) as f64 * idf(g))
                .collect();
            let nc = vc.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nr = vr.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nc > 0.0 && nr > 0.0 {
                acc += vc.iter().zip(&vr).map(|(a, b)| a * b).sum::<f64>() / (nc * nr);
            }
        }
        total += acc / refs.len() as f64;
    }
    10.0 * total / 4.0
}

pub const CASES: &[(&str, &[&str])] = &[
    ("a dog runs", &["a dog runs"]),
    ("a a a", &["a cat"]),
    ("x y z", &["a b c"]),
    ("a b c", &["a c d"]),
    ("dog runs", &["runs dog"]),
    ("a dog runs fast", &["a dog runs fast"]),
    ("a dog", &["a dog runs in park"]),
    (
        "the cat sits on mat",
        &["the cat is on the mat", "a cat sits on a mat"],
    ),
    ("a red ball", &["a red ball", "one red ball"]),
    ("two dogs run", &["two dog runs", "dogs run"]),
    ("a b a b a b", &["a b", "b a b"]),
    ("cats sit", &["cat sits here"]),
    ("a dog runs near a cat", &["a cat runs near a dog"]),
    ("big dog", &["a big dog", "big dogs", "the dog is big"]),
    ("q", &["q"]),
    ("q", &["q r s t u v"]),
    ("a b c d e f", &["f e d c b a"]),
    (
        "man rides horse",
        &["a man rides a horse", "man riding horse"],
    ),
    ("a man rides a horse", &["man rides horse"]),
    (
        "bird flies over tree",
        &["a bird flies", "bird over the tree", "tree"],
    ),
    ("a blue car parked", &["a car is parked", "the blue car"]),
    ("the the the", &["the cat", "the dog the"]),
];

pub fn case_docs() -> Vec<Vec<Vec<&'static str>>> {
    CASES
        .iter()
        .map(|(_, refs)| refs.iter().map(|r| toks(r)).collect())
        .collect()
}

pub fn idf_for(docs: &[Vec<Vec<&'static str>>]) -> IdfTable<&'static str> {
    IdfTable::build(docs.iter().map(|d| d.iter().map(Vec::as_slice)))
}
