//! Synthetic datasets with a known latent topic structure.
//!
//! Every image is generated from an (action topic, reason topic) pair. The
//! same latent drives its visual features (through fixed random linear maps),
//! its scene-text words and its positive statements, so each channel of the
//! ranker has something recoverable to find. Negatives come from other topic
//! pairs.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataio::{Dataset, FeatureDims, ImageRecord, Label, Statement};
use crate::embeddings::EmbeddingTable;
use crate::linalg::{normalized, Matrix};
use crate::textsem::SceneText;
use crate::vissem::VisualFeatures;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_images: usize,
    pub num_topics: usize,
    pub word_dim: usize,
    pub object_dim: usize,
    pub symbol_dim: usize,
    pub statements_per_image: usize,
    pub positives_per_image: usize,
    pub noise_sigma: f64,
    pub ocr_dropout: f64,
    pub seed: u64,
    /// Draw action and reason topics independently (otherwise they coincide).
    pub independent_parts: bool,
    pub verbs_per_topic: usize,
    pub words_per_topic: usize,
    pub reason_len: usize,
    pub scene_len: usize,
    pub patches_per_channel: usize,
    /// Probability that a patch depicts a random topic pair instead of the image's own.
    pub visual_clutter: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_images: 200,
            num_topics: 5,
            word_dim: 16,
            object_dim: 12,
            symbol_dim: 8,
            statements_per_image: 15,
            positives_per_image: 3,
            noise_sigma: 0.05,
            ocr_dropout: 0.1,
            seed: 7,
            independent_parts: false,
            verbs_per_topic: 4,
            words_per_topic: 10,
            reason_len: 3,
            scene_len: 5,
            patches_per_channel: 3,
            visual_clutter: 0.25,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(m.into()));
        if self.positives_per_image == 0 || self.positives_per_image >= self.statements_per_image {
            return err("need 0 < positives_per_image < statements_per_image");
        }
        if self.word_dim < 2 || self.object_dim < 2 || self.symbol_dim < 2 {
            return err("all dimensions must be at least 2");
        }
        if self.num_topics == 0 || self.num_images == 0 {
            return err("need at least one topic and one image");
        }
        if self.verbs_per_topic == 0 || self.words_per_topic == 0 || self.reason_len == 0 {
            return err("topic vocabularies must be non-empty");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return err("noise_sigma must be a non-negative number");
        }
        if !(0.0..=1.0).contains(&self.ocr_dropout) || !(0.0..=1.0).contains(&self.visual_clutter) {
            return err("ocr_dropout and visual_clutter must be probabilities");
        }
        if self.patches_per_channel == 0 {
            return err("need at least one patch per channel");
        }
        Ok(())
    }
}

/// Generating latents for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTruth {
    pub id: String,
    pub action_topic: usize,
    pub reason_topic: usize,
    /// `(action, reason)` topics per statement, in final (shuffled) order.
    pub statement_topics: Vec<(usize, usize)>,
    /// `permutation[i]` is the generation slot of the statement now at index `i`;
    /// slots `0..positives_per_image` were generated as positives.
    pub permutation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub action_topics: Vec<Vec<f64>>,
    pub reason_topics: Vec<Vec<f64>>,
    pub object_map: Matrix,
    pub symbol_map: Matrix,
    pub positives_per_image: usize,
    pub images: Vec<ImageTruth>,
}

impl GroundTruth {
    pub fn image(&self, id: &str) -> Result<&ImageTruth> {
        self.images
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| Error::UnknownImage(id.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub embeddings: EmbeddingTable,
    pub gold: BTreeMap<String, BTreeSet<usize>>,
    pub ground_truth: GroundTruth,
}

impl SynthOutput {
    pub fn gold_json(&self) -> String {
        serde_json::to_string_pretty(&self.gold).expect("serializable gold")
    }

    /// Writes `dataset.jsonl`, `embeddings.txt` and `gold.json` into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(p, e))
        };
        write("dataset.jsonl", self.dataset.to_jsonl())?;
        write("embeddings.txt", self.embeddings.to_text())?;
        write("gold.json", self.gold_json())
    }
}

fn unit_vector<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Some(u) = normalized(&v) {
            return u;
        }
    }
}

fn jitter<R: Rng>(v: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let n: f64 = rng.sample(StandardNormal);
            x + sigma * n
        })
        .collect()
}

fn verb(topic: usize, i: usize, independent: bool) -> String {
    if independent {
        format!("a{topic}v{i}")
    } else {
        format!("t{topic}v{i}")
    }
}

fn noun(topic: usize, i: usize, independent: bool) -> String {
    if independent {
        format!("r{topic}w{i}")
    } else {
        format!("t{topic}w{i}")
    }
}

/// Generates a dataset, its embedding table, gold labels and latents. Deterministic in `seed`.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let c = config;
    let ind = c.independent_parts;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);

    let action_topics: Vec<Vec<f64>> = (0..c.num_topics)
        .map(|_| unit_vector(c.word_dim, &mut rng))
        .collect();
    let reason_topics: Vec<Vec<f64>> = if ind {
        (0..c.num_topics)
            .map(|_| unit_vector(c.word_dim, &mut rng))
            .collect()
    } else {
        action_topics.clone()
    };

    let mut table = EmbeddingTable::new(c.word_dim)?;
    for k in 0..c.num_topics {
        for i in 0..c.verbs_per_topic {
            table.insert(
                &verb(k, i, ind),
                jitter(&action_topics[k], c.noise_sigma, &mut rng),
            )?;
        }
        for i in 0..c.words_per_topic {
            table.insert(
                &noun(k, i, ind),
                jitter(&reason_topics[k], c.noise_sigma, &mut rng),
            )?;
        }
    }

    let latent_dim = 2 * c.word_dim;
    let scale = 1.0 / (latent_dim as f64).sqrt();
    let mut gaussian_map = |rows: usize| {
        Matrix::from_fn(rows, latent_dim, |_, _| {
            let n: f64 = rng.sample(StandardNormal);
            scale * n
        })
    };
    let object_map = gaussian_map(c.object_dim);
    let symbol_map = gaussian_map(c.symbol_dim);

    let pairs: Vec<(usize, usize)> = (0..c.num_topics)
        .flat_map(|a| (0..c.num_topics).map(move |r| (a, r)))
        .filter(|&(a, r)| ind || a == r)
        .collect();

    let statement_text = |(a, r): (usize, usize), rng: &mut ChaCha8Rng| {
        let v = verb(a, rng.random_range(0..c.verbs_per_topic), ind);
        let words: Vec<String> = (0..c.reason_len)
            .map(|_| noun(r, rng.random_range(0..c.words_per_topic), ind))
            .collect();
        format!("i should {v} because {}", words.join(" "))
    };

    let mut records = Vec::with_capacity(c.num_images);
    let mut truths = Vec::with_capacity(c.num_images);
    let mut gold = BTreeMap::new();
    for n in 0..c.num_images {
        let id = format!("img{n:04}");
        let (a, r) = *pairs.choose(&mut rng).expect("at least one topic pair");
        let latent = |(a, r): (usize, usize)| -> Vec<f64> {
            let mut l = action_topics[a].clone();
            l.extend_from_slice(&reason_topics[r]);
            l
        };
        let patches = |map: &Matrix, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..c.patches_per_channel)
                .map(|_| {
                    let source = if rng.random::<f64>() < c.visual_clutter {
                        *pairs.choose(rng).expect("at least one topic pair")
                    } else {
                        (a, r)
                    };
                    jitter(&map.mul_vec(&latent(source)), c.noise_sigma, rng)
                })
                .collect()
        };
        let object_patches = patches(&object_map, &mut rng);
        let symbol_patches = patches(&symbol_map, &mut rng);

        let mut scene = Vec::new();
        for _ in 0..c.scene_len {
            let pick = rng.random_range(0..c.verbs_per_topic + c.words_per_topic);
            let word = if pick < c.verbs_per_topic {
                verb(a, pick, ind)
            } else {
                noun(r, pick - c.verbs_per_topic, ind)
            };
            if rng.random::<f64>() >= c.ocr_dropout {
                scene.push(word.to_uppercase());
            }
        }

        let others: Vec<(usize, usize)> = pairs.iter().copied().filter(|&p| p != (a, r)).collect();
        let mut slots: Vec<((usize, usize), String, Label)> =
            Vec::with_capacity(c.statements_per_image);
        for _ in 0..c.positives_per_image {
            slots.push(((a, r), statement_text((a, r), &mut rng), Label::Positive));
        }
        for _ in c.positives_per_image..c.statements_per_image {
            let p = *others.choose(&mut rng).unwrap_or(&(a, r));
            slots.push((p, statement_text(p, &mut rng), Label::Negative));
        }
        let mut permutation: Vec<usize> = (0..slots.len()).collect();
        permutation.shuffle(&mut rng);

        let statements: Vec<Statement> = permutation
            .iter()
            .map(|&s| Statement::new(slots[s].1.clone(), slots[s].2))
            .collect();
        let record = ImageRecord {
            id: id.clone(),
            features: VisualFeatures {
                object_patches,
                symbol_patches,
            },
            scene: SceneText::new(scene),
            statements,
        };
        gold.insert(id.clone(), record.positive_indices());
        truths.push(ImageTruth {
            id,
            action_topic: a,
            reason_topic: r,
            statement_topics: permutation.iter().map(|&s| slots[s].0).collect(),
            permutation,
        });
        records.push(record);
    }

    Ok(SynthOutput {
        dataset: Dataset {
            records,
            dims: FeatureDims {
                object: c.object_dim,
                symbol: c.symbol_dim,
            },
        },
        embeddings: table,
        gold,
        ground_truth: GroundTruth {
            action_topics,
            reason_topics,
            object_map,
            symbol_map,
            positives_per_image: c.positives_per_image,
            images: truths,
        },
    })
}

/// Statements generated from the image's own topic pair.
pub fn oracle_best_match(truth: &GroundTruth, id: &str) -> Result<BTreeSet<usize>> {
    let img = truth.image(id)?;
    Ok(img
        .statement_topics
        .iter()
        .enumerate()
        .filter(|(_, &t)| t == (img.action_topic, img.reason_topic))
        .map(|(i, _)| i)
        .collect())
}
