//! Property sweeps for every module, seeded and run through the public API.

use std::collections::{BTreeMap, BTreeSet};

use adrank::cli::{run, Cli};
use adrank::dataio::{parse_ocr_json, Dataset, Label, Statement};
use adrank::embeddings::{cosine_distance, EmbeddingTable};
use adrank::evaluator::{accuracy, agreement};
use adrank::lexical::{fit_tfidf, lexical_distance};
use adrank::linalg::{normalized, Matrix};
use adrank::ranker::{Components, RankedList, Ranker, RankingWeights, VisualDistance};
use adrank::synth::{generate, SynthConfig};
use adrank::textsem::{attended_text_embedding, attention_weights, SceneText};
use adrank::vissem::{
    batch_loss, train, triplet_loss, Dims, Head, ImageEmbedding, Mode, ProjectionModel, Sample,
    Target, TrainConfig,
};
use adrank::Parallelism;
use clap::Parser;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::{ensure, Check};

type Case = Result<(), String>;

const CASES: usize = 200;

fn vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect()
}

fn nonzero(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v = vector(rng, dim);
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        if let Some(u) = normalized(&vector(rng, dim)) {
            return u;
        }
    }
}

fn random_table(rng: &mut ChaCha8Rng, words: usize) -> EmbeddingTable {
    let dim = rng.random_range(1..=6);
    let mut table = EmbeddingTable::new(dim).unwrap();
    for w in 0..words {
        table.insert(&format!("w{w}"), nonzero(rng, dim)).unwrap();
    }
    table
}

fn random_tokens(rng: &mut ChaCha8Rng, vocab: usize, max_len: usize) -> Vec<String> {
    (0..rng.random_range(0..=max_len))
        .map(|_| format!("w{}", rng.random_range(0..vocab)))
        .collect()
}

fn repeat(tokens: &[String], k: usize) -> Vec<String> {
    (0..k).flat_map(|_| tokens.iter().cloned()).collect()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

fn small_synth(rng: &mut ChaCha8Rng) -> SynthConfig {
    SynthConfig {
        num_images: rng.random_range(4..12),
        num_topics: rng.random_range(2..5),
        word_dim: rng.random_range(2..6),
        object_dim: rng.random_range(2..5),
        symbol_dim: rng.random_range(2..4),
        statements_per_image: rng.random_range(3..7),
        positives_per_image: 1,
        seed: rng.random(),
        ..SynthConfig::default()
    }
}

// embeddings

fn cosine_properties(rng: &mut ChaCha8Rng) -> Case {
    let dim = rng.random_range(1..10);
    let (a, b) = (nonzero(rng, dim), vector(rng, dim));
    let ab = cosine_distance(&a, &b).map_err(|e| e.to_string())?;
    let ba = cosine_distance(&b, &a).map_err(|e| e.to_string())?;
    ensure(ab == ba, || format!("asymmetric: {ab} vs {ba}"))?;
    ensure((0.0..=2.0 + 1e-12).contains(&ab), || {
        format!("out of range: {ab}")
    })?;
    let aa = cosine_distance(&a, &a).map_err(|e| e.to_string())?;
    ensure(aa.abs() <= 1e-12, || format!("self distance {aa}"))?;
    let k = rng.random_range(1e-3..1e3);
    let scaled: Vec<f64> = a.iter().map(|x| k * x).collect();
    let d = cosine_distance(&a, &scaled).map_err(|e| e.to_string())?;
    ensure(d.abs() <= 1e-12, || format!("distance to {k}*a is {d}"))
}

fn mean_embed_permutation(rng: &mut ChaCha8Rng) -> Case {
    let table = random_table(rng, 8);
    let mut tokens = random_tokens(rng, 11, 12);
    let before = table.mean_embed(&tokens);
    tokens.shuffle(rng);
    let after = table.mean_embed(&tokens);
    match (before, after) {
        (None, None) => Ok(()),
        (Some(x), Some(y)) => ensure(close(&x, &y, 1e-12), || format!("{x:?} vs {y:?}")),
        (x, y) => Err(format!("{x:?} vs {y:?}")),
    }
}

fn table_round_trip(rng: &mut ChaCha8Rng) -> Case {
    let words = rng.random_range(1..10);
    let table = random_table(rng, words);
    let reloaded =
        EmbeddingTable::from_reader(table.to_text().as_bytes()).map_err(|e| e.to_string())?;
    ensure(
        reloaded.len() == table.len() && reloaded.dim() == table.dim(),
        || "shape changed".into(),
    )?;
    for (tok, v) in table.iter() {
        let w = reloaded.lookup(tok).ok_or_else(|| format!("{tok} lost"))?;
        ensure(close(v, &w, 1e-9), || format!("{tok}: {v:?} vs {w:?}"))?;
    }
    Ok(())
}

// textsem

fn gamma_bounds(rng: &mut ChaCha8Rng) -> Case {
    let table = random_table(rng, 10);
    let scene = SceneText::new(random_tokens(rng, 13, 8));
    let statement = random_tokens(rng, 13, 8);
    let m = statement.iter().filter(|t| table.contains(t)).count() as f64;
    for (tok, g) in attention_weights(&scene, &statement, &table).entries {
        ensure(g >= m / 3.0 - 1e-12 && g <= m + 1e-12, || {
            format!("gamma({tok}) = {g} outside [{}, {m}]", m / 3.0)
        })?;
    }
    Ok(())
}

fn gamma_dominance(rng: &mut ChaCha8Rng) -> Case {
    let table = random_table(rng, 8);
    let scene_tokens: Vec<String> = (0..rng.random_range(2..8))
        .map(|i| format!("w{}", (i * 3) % 8))
        .collect();
    // One distinct in-vocabulary statement token makes every scene pair comparable.
    let anchor = format!("w{}", rng.random_range(0..8));
    let mut statement = vec![anchor.clone(); rng.random_range(1..4)];
    statement.push("oov".into());
    statement.shuffle(rng);
    let weights = attention_weights(&SceneText::new(scene_tokens), &statement, &table).entries;
    let s = table.lookup(&anchor).unwrap();
    let sim = |t: &str| 1.0 / (1.0 + cosine_distance(&table.lookup(t).unwrap(), &s).unwrap());
    for (a, ga) in &weights {
        for (b, gb) in &weights {
            if sim(a) >= sim(b) {
                ensure(ga >= gb, || {
                    format!("sim({a}) >= sim({b}) but gamma {ga} < {gb}")
                })?;
            }
        }
    }
    Ok(())
}

fn attended_permutation(rng: &mut ChaCha8Rng) -> Case {
    let table = random_table(rng, 8);
    let mut scene = random_tokens(rng, 10, 8);
    let mut statement = random_tokens(rng, 10, 8);
    let before = attended_text_embedding(&SceneText::new(scene.clone()), &statement, &table);
    scene.shuffle(rng);
    statement.shuffle(rng);
    let after = attended_text_embedding(&SceneText::new(scene), &statement, &table);
    match (before, after) {
        (None, None) => Ok(()),
        (Some(x), Some(y)) => ensure(close(&x, &y, 1e-9), || format!("{x:?} vs {y:?}")),
        (x, y) => Err(format!("{x:?} vs {y:?}")),
    }
}

fn attended_gamma_scale(rng: &mut ChaCha8Rng) -> Case {
    // Repeating the statement k times multiplies every gamma by k.
    let table = random_table(rng, 8);
    let scene = SceneText::new(random_tokens(rng, 10, 8));
    let statement = random_tokens(rng, 10, 6);
    let k = rng.random_range(2..5);
    let repeated = repeat(&statement, k);
    let base = attention_weights(&scene, &statement, &table);
    let scaled = attention_weights(&scene, &repeated, &table);
    for ((_, g), (_, h)) in base.entries.iter().zip(&scaled.entries) {
        ensure((h - k as f64 * g).abs() <= 1e-9 * h.abs().max(1.0), || {
            format!("gamma {g} repeated {k}x gave {h}")
        })?;
    }
    match (
        attended_text_embedding(&scene, &statement, &table),
        attended_text_embedding(&scene, &repeated, &table),
    ) {
        (None, None) => Ok(()),
        (Some(x), Some(y)) => ensure(close(&x, &y, 1e-9), || format!("{x:?} vs {y:?}")),
        (x, y) => Err(format!("{x:?} vs {y:?}")),
    }
}

// lexical

fn lexical_properties(rng: &mut ChaCha8Rng) -> Case {
    let vocab = rng.random_range(2..20);
    let corpus: Vec<Vec<String>> = (0..rng.random_range(1..30))
        .map(|_| random_tokens(rng, vocab, 10))
        .collect();
    let model = fit_tfidf(&corpus).map_err(|e| e.to_string())?;
    let (a, b) = (
        random_tokens(rng, vocab + 3, 10),
        random_tokens(rng, vocab + 3, 10),
    );
    let d = lexical_distance(&model, &a, &b);
    ensure((0.0..=1.0 + 1e-12).contains(&d), || {
        format!("distance {d} out of range")
    })?;
    let r = lexical_distance(&model, &b, &a);
    ensure(d == r, || format!("asymmetric: {d} vs {r}"))?;
    let k = rng.random_range(2..5);
    let s = lexical_distance(&model, &repeat(&a, k), &repeat(&b, k));
    ensure((d - s).abs() <= 1e-12, || format!("{k} copies: {d} vs {s}"))
}

// vissem

fn random_model(rng: &mut ChaCha8Rng, mode: Mode) -> ProjectionModel {
    let emb = rng.random_range(2..6);
    let dims = Dims {
        object: rng.random_range(1..5),
        symbol: rng.random_range(1..4),
        word: emb,
        emb,
    };
    ProjectionModel::init(
        mode,
        dims,
        TrainConfig {
            mode,
            ..TrainConfig::default()
        },
        rng,
    )
    .unwrap()
}

fn embeddings_unit_norm(rng: &mut ChaCha8Rng) -> Case {
    for mode in Mode::ALL {
        let model = random_model(rng, mode);
        let v = nonzero(rng, model.dims.visual());
        let text = rng.random_bool(0.7).then(|| vector(rng, model.dims.word));
        let heads = match model
            .embed(&v, text.as_deref())
            .map_err(|e| e.to_string())?
        {
            ImageEmbedding::Joint(z) => vec![z],
            ImageEmbedding::Parts { action, reason } => vec![action, reason],
        };
        for z in heads {
            let n = z.iter().map(|x| x * x).sum::<f64>().sqrt();
            ensure((n - 1.0).abs() <= 1e-9, || format!("{mode}: norm {n}"))?;
        }
    }
    Ok(())
}

fn triplet_nonnegative(rng: &mut ChaCha8Rng) -> Case {
    let dim = rng.random_range(2..6);
    let z = unit(rng, dim);
    let pos = unit(rng, dim);
    let negs: Vec<Vec<f64>> = (0..rng.random_range(1..5))
        .map(|_| unit(rng, dim))
        .collect();
    let beta = rng.random_range(0.0..1.0);
    let loss = triplet_loss(&z, &pos, &negs, beta).map_err(|e| e.to_string())?;
    ensure(loss >= 0.0, || format!("negative loss {loss}"))?;
    let dist = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let all_clear = negs
        .iter()
        .all(|n| dist(&z, &pos) - dist(&z, n) + beta <= 0.0);
    ensure((loss == 0.0) == all_clear, || {
        format!("loss {loss} but all negatives clear: {all_clear}")
    })
}

fn training_determinism(rng: &mut ChaCha8Rng) -> Case {
    let data = generate(&small_synth(rng)).map_err(|e| e.to_string())?;
    let mode = Mode::ALL[rng.random_range(0..4)];
    let config = TrainConfig {
        mode,
        epochs: 3,
        batch_size: rng.random_range(2..5),
        seed: rng.random(),
        ..TrainConfig::default()
    };
    let a = train(&data.dataset, &data.embeddings, &config).map_err(|e| e.to_string())?;
    let b = train(&data.dataset, &data.embeddings, &config).map_err(|e| e.to_string())?;
    ensure(a.loss_trace == b.loss_trace, || {
        format!("{mode}: traces differ")
    })?;
    ensure(a.model == b.model, || format!("{mode}: models differ"))
}

fn identity_fixture(rng: &mut ChaCha8Rng) -> Case {
    let emb = rng.random_range(2..6);
    let symbol = rng.random_range(1..4);
    let dims = Dims {
        object: emb,
        symbol,
        word: emb,
        emb,
    };
    let config = TrainConfig::default();
    let identity = Matrix::from_fn(emb, dims.visual(), |i, j| if i == j { 1.0 } else { 0.0 });
    let model = ProjectionModel::from_heads(
        Mode::Plain,
        dims,
        config.clone(),
        vec![Head {
            visual: identity,
            fusion: None,
        }],
    )
    .map_err(|e| e.to_string())?;
    let batch: Vec<Sample> = (0..rng.random_range(1..5))
        .map(|_| {
            let e = unit(rng, emb);
            let k = rng.random_range(0.5..2.0);
            let mut visual: Vec<f64> = e.iter().map(|x| x * k).collect();
            visual.extend(vector(rng, symbol));
            let neg: Vec<f64> = e.iter().map(|x| -x).collect();
            Sample {
                visual,
                text: None,
                targets: vec![Target {
                    positive: e,
                    negatives: vec![neg],
                }],
            }
        })
        .collect();
    let loss = batch_loss(&model, &batch).map_err(|e| e.to_string())?;
    ensure(loss == 0.0, || format!("loss {loss} at identity"))
}

// ranker

fn joint(rng: &mut ChaCha8Rng) -> Components {
    Components {
        visual: VisualDistance::Joint(rng.random_range(0.0..2.0)),
        text: rng.random_range(0.0..2.0),
        lexical: rng.random_range(0.0..1.0),
    }
}

fn parts(rng: &mut ChaCha8Rng) -> Components {
    Components {
        visual: VisualDistance::Parts {
            action: rng.random_range(0.0..2.0),
            reason: rng.random_range(0.0..2.0),
        },
        text: rng.random_range(0.0..2.0),
        lexical: rng.random_range(0.0..1.0),
    }
}

fn random_weights(rng: &mut ChaCha8Rng) -> RankingWeights {
    RankingWeights {
        alpha1: rng.random_range(0.0..2.0),
        alpha1a: rng.random_range(0.0..2.0),
        alpha1r: rng.random_range(0.0..2.0),
        alpha2: rng.random_range(0.0..2.0),
        alpha3: rng.random_range(0.0..2.0),
    }
}

fn monotonicity(rng: &mut ChaCha8Rng) -> Case {
    let w = random_weights(rng);
    let c = if rng.random_bool(0.5) {
        joint(rng)
    } else {
        parts(rng)
    };
    let delta = rng.random_range(0.0..1.0);
    let mut bumped = c;
    match (rng.random_range(0..3), &mut bumped.visual) {
        (0, VisualDistance::Joint(d)) => *d += delta,
        (0, VisualDistance::Parts { action, reason }) => {
            if rng.random_bool(0.5) {
                *action += delta
            } else {
                *reason += delta
            }
        }
        (1, _) => bumped.text += delta,
        _ => bumped.lexical += delta,
    }
    ensure(bumped.score(&w) >= c.score(&w), || {
        format!("{c:?} -> {bumped:?} lowered the score")
    })
}

fn argmin_invariance(rng: &mut ChaCha8Rng) -> Case {
    let n = rng.random_range(1..10);
    let comps: Vec<Components> = (0..n).map(|_| joint(rng)).collect();
    let w = random_weights(rng);
    let scores: Vec<f64> = comps.iter().map(|c| c.score(&w)).collect();
    let base = RankedList::from_scores(&scores).order();
    let shift = rng.random_range(-5..5) as f64;
    let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
    ensure(RankedList::from_scores(&shifted).order() == base, || {
        format!("shift by {shift} changed the order")
    })?;
    let k = [0.5, 2.0, 4.0][rng.random_range(0..3)];
    let wk = RankingWeights {
        alpha1: k * w.alpha1,
        alpha1a: k * w.alpha1a,
        alpha1r: k * w.alpha1r,
        alpha2: k * w.alpha2,
        alpha3: k * w.alpha3,
    };
    let rescaled: Vec<f64> = comps.iter().map(|c| c.score(&wk)).collect();
    ensure(RankedList::from_scores(&rescaled).order() == base, || {
        format!("scaling alphas by {k} changed the order")
    })
}

fn ablation_axes(rng: &mut ChaCha8Rng) -> Case {
    let data = generate(&small_synth(rng)).map_err(|e| e.to_string())?;
    let mode = Mode::ALL[rng.random_range(0..4)];
    let d = &data.dataset.dims;
    let dims = Dims {
        object: d.object,
        symbol: d.symbol,
        word: data.embeddings.dim(),
        emb: data.embeddings.dim(),
    };
    let model = ProjectionModel::init(
        mode,
        dims,
        TrainConfig {
            mode,
            ..TrainConfig::default()
        },
        rng,
    )
    .map_err(|e| e.to_string())?;
    let tfidf = data.dataset.fit_tfidf().map_err(|e| e.to_string())?;
    let w = random_weights(rng);
    let visual_only = RankingWeights {
        alpha2: 0.0,
        alpha3: 0.0,
        ..w
    };
    let text_only = RankingWeights {
        alpha1: 0.0,
        alpha1a: 0.0,
        alpha1r: 0.0,
        ..w
    };
    for record in &data.dataset.records {
        let ranker = Ranker::new(&model, &tfidf, &data.embeddings, w).map_err(|e| e.to_string())?;
        let comps = ranker.all_components(record).map_err(|e| e.to_string())?;
        let vis: Vec<f64> = comps
            .iter()
            .map(|c| match c.visual {
                VisualDistance::Joint(v) => w.alpha1 * v,
                VisualDistance::Parts { action, reason } => w.alpha1a * action + w.alpha1r * reason,
            })
            .collect();
        let txt: Vec<f64> = comps
            .iter()
            .map(|c| w.alpha2 * c.text + w.alpha3 * c.lexical)
            .collect();
        let rv = Ranker::new(&model, &tfidf, &data.embeddings, visual_only)
            .unwrap()
            .rank(record)
            .map_err(|e| e.to_string())?;
        let rt = Ranker::new(&model, &tfidf, &data.embeddings, text_only)
            .unwrap()
            .rank(record)
            .map_err(|e| e.to_string())?;
        ensure(rv.order() == RankedList::from_scores(&vis).order(), || {
            format!("{}: visual-only ranking differs", record.id)
        })?;
        ensure(rt.order() == RankedList::from_scores(&txt).order(), || {
            format!("{}: text-only ranking differs", record.id)
        })?;
    }
    Ok(())
}

fn rank_is_sorted_permutation(rng: &mut ChaCha8Rng) -> Case {
    let n = rng.random_range(0..=8);
    // Few distinct values so ties are common.
    let scores: Vec<f64> = (0..n)
        .map(|_| rng.random_range(0..4) as f64 * 0.25)
        .collect();
    let mut oracle: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (oracle[i], oracle[j]);
            if (scores[b], b) < (scores[a], a) {
                oracle.swap(i, j);
            }
        }
    }
    let order = RankedList::from_scores(&scores).order();
    let mut seen = order.clone();
    seen.sort_unstable();
    ensure(seen == (0..n).collect::<Vec<_>>(), || {
        format!("{order:?} is not a permutation")
    })?;
    ensure(order == oracle, || {
        format!("{scores:?}: {order:?} vs oracle {oracle:?}")
    })
}

// evaluator

fn evaluation_properties(rng: &mut ChaCha8Rng) -> Case {
    let n = rng.random_range(1..20);
    let mut gold = BTreeMap::new();
    let mut predictions = Vec::new();
    for i in 0..n {
        let positives: BTreeSet<usize> = (0..5).filter(|_| rng.random_bool(0.3)).collect();
        gold.insert(format!("img{i}"), positives);
        predictions.push((format!("img{i}"), rng.random_range(0..5)));
    }
    if gold.values().all(BTreeSet::is_empty) {
        gold.insert("img0".into(), BTreeSet::from([0]));
    }
    let acc = accuracy(&predictions, &gold)
        .map_err(|e| e.to_string())?
        .accuracy;
    ensure((0.0..=1.0).contains(&acc), || format!("accuracy {acc}"))?;
    predictions.shuffle(rng);
    let again = accuracy(&predictions, &gold)
        .map_err(|e| e.to_string())?
        .accuracy;
    ensure(acc == again, || {
        format!("permuted accuracy {again} vs {acc}")
    })?;
    let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
    let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
    let ab = agreement(&a, &b).map_err(|e| e.to_string())?;
    ensure((0.0..=1.0).contains(&ab), || format!("agreement {ab}"))?;
    ensure(ab == agreement(&b, &a).unwrap(), || {
        "agreement asymmetric".into()
    })?;
    ensure(agreement(&a, &a).unwrap() == 1.0, || {
        "self agreement below 1".into()
    })
}

// dataio

const WORDS: &[&str] = &[
    "we", "Should", "buy", "because", "it's", "fresh!", "BECAUSE", "cheap", "--", "the", "car",
];

fn dataset_round_trip(rng: &mut ChaCha8Rng) -> Case {
    let mut data = generate(&small_synth(rng))
        .map_err(|e| e.to_string())?
        .dataset;
    for record in &mut data.records {
        for s in &mut record.statements {
            let text: Vec<&str> = (0..rng.random_range(0..9))
                .map(|_| WORDS[rng.random_range(0..WORDS.len())])
                .collect();
            let label =
                [Label::Positive, Label::Negative, Label::Unlabeled][rng.random_range(0..3)];
            *s = Statement::new(text.join(" "), label);
        }
    }
    let reloaded = Dataset::from_reader(data.to_jsonl().as_bytes()).map_err(|e| e.to_string())?;
    ensure(reloaded == data, || {
        "dataset changed across save/load".into()
    })
}

fn action_reason_split(rng: &mut ChaCha8Rng) -> Case {
    let text: Vec<&str> = (0..rng.random_range(0..12))
        .map(|_| WORDS[rng.random_range(0..WORDS.len())])
        .collect();
    let s = Statement::new(text.join(" "), Label::Unlabeled);
    if s.split {
        let mut joined = s.action_tokens.clone();
        joined.push("because".into());
        joined.extend(s.reason_tokens.iter().cloned());
        ensure(joined == s.tokens, || {
            format!("{:?}: {joined:?} vs {:?}", s.text, s.tokens)
        })?;
    }
    Ok(())
}

fn ocr_order(rng: &mut ChaCha8Rng) -> Case {
    let tokens: Vec<String> = (0..rng.random_range(0..10))
        .map(|_| WORDS[rng.random_range(0..WORDS.len())].to_string())
        .collect();
    let mut annotations = vec![json!({"description": tokens.join(" ")})];
    annotations.extend(
        tokens
            .iter()
            .map(|t| json!({"description": t, "boundingPoly": {"vertices": []}})),
    );
    let layouts = [
        json!({"textAnnotations": annotations}),
        json!({"responses": [{"textAnnotations": annotations}]}),
        json!(annotations),
    ];
    for layout in &layouts {
        let parsed = parse_ocr_json(layout);
        ensure(parsed.scene.tokens() == tokens.as_slice(), || {
            format!("{:?} vs {tokens:?}", parsed.scene.tokens())
        })?;
    }
    Ok(())
}

// synth

fn synth_determinism(rng: &mut ChaCha8Rng) -> Case {
    let config = small_synth(rng);
    let (a, b) = (
        generate(&config).map_err(|e| e.to_string())?,
        generate(&config).map_err(|e| e.to_string())?,
    );
    ensure(a.dataset.to_jsonl() == b.dataset.to_jsonl(), || {
        "datasets differ".into()
    })?;
    ensure(a.embeddings.to_text() == b.embeddings.to_text(), || {
        "embeddings differ".into()
    })?;
    ensure(a.gold_json() == b.gold_json(), || "gold differs".into())
}

fn synth_clean_text_accuracy(rng: &mut ChaCha8Rng) -> Case {
    let config = SynthConfig {
        noise_sigma: 0.0,
        ocr_dropout: 0.0,
        num_images: 20,
        num_topics: rng.random_range(2..7),
        seed: rng.random(),
        ..SynthConfig::default()
    };
    let data = generate(&config).map_err(|e| e.to_string())?;
    let dims = Dims {
        object: config.object_dim,
        symbol: config.symbol_dim,
        word: config.word_dim,
        emb: config.word_dim,
    };
    let model = ProjectionModel::init(Mode::Plain, dims, TrainConfig::default(), rng)
        .map_err(|e| e.to_string())?;
    let tfidf = data.dataset.fit_tfidf().map_err(|e| e.to_string())?;
    let ranker = Ranker::new(
        &model,
        &tfidf,
        &data.embeddings,
        RankingWeights::default().text_only(),
    )
    .map_err(|e| e.to_string())?;
    let predictions = ranker
        .predict(&data.dataset, Parallelism::Sequential)
        .map_err(|e| e.to_string())?;
    let acc = accuracy(&predictions, &data.gold)
        .map_err(|e| e.to_string())?
        .accuracy;
    ensure(acc == 1.0, || {
        format!("seed {}: text-only accuracy {acc}", config.seed)
    })
}

fn synth_passes_validation(rng: &mut ChaCha8Rng) -> Case {
    let data = generate(&small_synth(rng)).map_err(|e| e.to_string())?;
    let reloaded =
        Dataset::from_reader(data.dataset.to_jsonl().as_bytes()).map_err(|e| e.to_string())?;
    ensure(reloaded == data.dataset, || {
        "generated dataset changed on validation".into()
    })
}

// cli

fn cli(args: &[String]) -> anyhow::Result<String> {
    let parsed =
        Cli::try_parse_from(std::iter::once("adrank".to_string()).chain(args.iter().cloned()))?;
    let mut out = Vec::new();
    run(&parsed, &mut out)?;
    Ok(String::from_utf8(out)?)
}

fn cli_determinism_and_artifacts(rng: &mut ChaCha8Rng) -> Case {
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let statements = rng.random_range(2..6);
    let positives = rng.random_range(1..4);
    let images = rng.random_range(3..8);
    let synth_args = |out: &std::path::Path| -> Vec<String> {
        [
            "synth",
            "--out",
            out.to_str().unwrap(),
            "--images",
            &images.to_string(),
            "--topics",
            "3",
            "--statements",
            &statements.to_string(),
            "--positives",
            &positives.to_string(),
            "--seed",
            "11",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let ra = cli(&synth_args(&a));
    let rb = cli(&synth_args(&b));
    let produced = a.join("dataset.jsonl").exists()
        && a.join("embeddings.txt").exists()
        && a.join("gold.json").exists();
    ensure(ra.is_ok() == produced, || {
        format!("synth ok={} but artifacts present={produced}", ra.is_ok())
    })?;
    if ra.is_err() {
        ensure(positives >= statements, || {
            format!("unexpected failure: {:?}", ra.err())
        })?;
        return Ok(());
    }
    ensure(rb.is_ok(), || "second identical run failed".into())?;
    for f in ["dataset.jsonl", "embeddings.txt", "gold.json"] {
        ensure(
            std::fs::read(a.join(f)).ok() == std::fs::read(b.join(f)).ok(),
            || format!("{f} differs between runs"),
        )?;
    }

    let p = |s: &std::path::Path| s.to_str().unwrap().to_string();
    let data = a.join("dataset.jsonl");
    let train_args = |out: &std::path::Path, data: &std::path::Path| -> Vec<String> {
        vec![
            "train".into(),
            "--data".into(),
            p(data),
            "--embeddings".into(),
            p(&a.join("embeddings.txt")),
            "--out".into(),
            p(out),
            "--epochs".into(),
            "2".into(),
            "--batch".into(),
            "2".into(),
        ]
    };
    let (ca, cb) = (dir.path().join("ca.json"), dir.path().join("cb.json"));
    let log_a = cli(&train_args(&ca, &data)).map_err(|e| format!("{e:#}"))?;
    let log_b = cli(&train_args(&cb, &data)).map_err(|e| format!("{e:#}"))?;
    ensure(log_a == log_b, || "training logs differ".into())?;
    ensure(std::fs::read(&ca).ok() == std::fs::read(&cb).ok(), || {
        "checkpoints differ".into()
    })?;

    let missing = dir.path().join("missing.jsonl");
    let cc = dir.path().join("cc.json");
    ensure(
        cli(&train_args(&cc, &missing)).is_err() && !cc.exists(),
        || "failed train left an artifact".into(),
    )?;
    let ranked = dir.path().join("rank.jsonl");
    let rank = |model: &std::path::Path| -> Vec<String> {
        vec![
            "rank".into(),
            "--data".into(),
            p(&data),
            "--model".into(),
            p(model),
            "--embeddings".into(),
            p(&a.join("embeddings.txt")),
            "--out".into(),
            p(&ranked),
        ]
    };
    ensure(cli(&rank(&cc)).is_err() && !ranked.exists(), || {
        "failed rank left an artifact".into()
    })?;
    ensure(cli(&rank(&ca)).is_ok() && ranked.exists(), || {
        "rank produced no output".into()
    })
}

struct Property {
    name: &'static str,
    cases: usize,
    check: fn(&mut ChaCha8Rng) -> Case,
}

pub fn criterion() -> Check {
    let properties = [
        Property {
            name: "cosine symmetry/range/scale",
            cases: CASES,
            check: cosine_properties,
        },
        Property {
            name: "mean_embed permutation",
            cases: CASES,
            check: mean_embed_permutation,
        },
        Property {
            name: "embedding text round trip",
            cases: CASES,
            check: table_round_trip,
        },
        Property {
            name: "gamma bounds",
            cases: CASES,
            check: gamma_bounds,
        },
        Property {
            name: "gamma dominance",
            cases: CASES,
            check: gamma_dominance,
        },
        Property {
            name: "attended permutation",
            cases: CASES,
            check: attended_permutation,
        },
        Property {
            name: "attended gamma rescaling",
            cases: CASES,
            check: attended_gamma_scale,
        },
        Property {
            name: "lexical range/symmetry/copies",
            cases: CASES,
            check: lexical_properties,
        },
        Property {
            name: "embed unit norm",
            cases: CASES,
            check: embeddings_unit_norm,
        },
        Property {
            name: "triplet loss sign",
            cases: CASES,
            check: triplet_nonnegative,
        },
        Property {
            name: "training determinism",
            cases: CASES,
            check: training_determinism,
        },
        Property {
            name: "identity zero-loss fixture",
            cases: CASES,
            check: identity_fixture,
        },
        Property {
            name: "score monotonicity",
            cases: CASES,
            check: monotonicity,
        },
        Property {
            name: "argmin invariance",
            cases: CASES,
            check: argmin_invariance,
        },
        Property {
            name: "ablation axes",
            cases: CASES,
            check: ablation_axes,
        },
        Property {
            name: "rank vs sort oracle",
            cases: CASES,
            check: rank_is_sorted_permutation,
        },
        Property {
            name: "accuracy/agreement",
            cases: CASES,
            check: evaluation_properties,
        },
        Property {
            name: "dataset round trip",
            cases: CASES,
            check: dataset_round_trip,
        },
        Property {
            name: "action/reason split",
            cases: CASES,
            check: action_reason_split,
        },
        Property {
            name: "ocr token order",
            cases: CASES,
            check: ocr_order,
        },
        Property {
            name: "synth determinism",
            cases: CASES,
            check: synth_determinism,
        },
        Property {
            name: "synth clean text accuracy",
            cases: CASES,
            check: synth_clean_text_accuracy,
        },
        Property {
            name: "synth passes validation",
            cases: CASES,
            check: synth_passes_validation,
        },
        Property {
            name: "cli determinism/artifacts",
            cases: CASES,
            check: cli_determinism_and_artifacts,
        },
    ];
    let mut total = 0;
    for (pi, p) in properties.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9 ^ pi as u64);
        for case in 0..p.cases {
            (p.check)(&mut rng).map_err(|e| format!("{} case {case}: {e}", p.name))?;
        }
        total += p.cases;
    }
    Ok(format!("{} properties, {total} cases", properties.len()))
}
