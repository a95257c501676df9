//! Autoregressive character sampling from a trained text checkpoint.

use std::collections::HashMap;

use crate::data::text::{preprocess, tokenize, VariantMap, PLACEHOLDER};
use crate::error::{Error, Result};
use crate::linalg::{softmax, Rng};
use crate::model::checkpoint::Checkpoint;
use crate::model::{predict, StepInputs};

/// Samples `length` characters after `prompt`. Each step feeds the last
/// `l_t` tokens (left-padded with the placeholder) through the network and
/// draws from `softmax(logits / temperature)`; `temperature = 0` takes the
/// argmax. The placeholder is never emitted. Returns only the continuation.
pub fn generate_text(ckpt: &Checkpoint, prompt: &str, length: usize, rng: &mut Rng, temperature: f64) -> Result<String> {
    let vocab = ckpt
        .vocab
        .as_ref()
        .ok_or_else(|| Error::config("checkpoint has no vocabulary"))?;
    if vocab.is_empty() {
        return Err(Error::config("empty vocabulary"));
    }
    if ckpt.params.embedding.is_none() {
        return Err(Error::config("checkpoint is not a token model"));
    }
    if !(temperature >= 0.0) {
        return Err(Error::config("temperature must be non-negative"));
    }
    let l_t = ckpt.schedule.l_t();
    let mut context = tokenize(&preprocess(prompt, &VariantMap::default()), vocab);
    let mut out = String::with_capacity(length);
    let mut window = vec![PLACEHOLDER; l_t];
    for _ in 0..length {
        let n = context.len().min(l_t);
        window[..l_t - n].fill(PLACEHOLDER);
        window[l_t - n..].copy_from_slice(&context[context.len() - n..]);
        let logits = predict(&ckpt.params, &ckpt.schedule, StepInputs::Tokens(&window))?;
        if !logits.is_finite() {
            return Err(Error::Numeric("non-finite logits during generation".into()));
        }
        let next = if temperature == 0.0 {
            (1..logits.len()).fold(1, |b, k| if logits[k] > logits[b] { k } else { b })
        } else {
            let scaled: Vec<f64> = logits.iter().map(|z| z / temperature).collect();
            let mut probs = softmax(&scaled);
            probs[PLACEHOLDER] = 0.0;
            let total: f64 = probs.iter().sum();
            let mut u = rng.uniform() * total;
            let mut pick = probs.len() - 1;
            for (k, &p) in probs.iter().enumerate().skip(1) {
                if u < p {
                    pick = k;
                    break;
                }
                u -= p;
            }
            while probs[pick] == 0.0 && pick > 1 {
                pick -= 1;
            }
            pick
        };
        context.push(next);
        out.push(vocab.token(next).expect("index below vocabulary size"));
    }
    Ok(out)
}

/// Relative frequencies of adjacent character pairs.
pub fn bigram_distribution(text: &str) -> HashMap<(char, char), f64> {
    let chars: Vec<char> = text.chars().collect();
    let mut counts: HashMap<(char, char), f64> = HashMap::new();
    for w in chars.windows(2) {
        *counts.entry((w[0], w[1])).or_default() += 1.0;
    }
    let n = chars.len().saturating_sub(1).max(1) as f64;
    for v in counts.values_mut() {
        *v /= n;
    }
    counts
}

pub fn l1_distance(a: &HashMap<(char, char), f64>, b: &HashMap<(char, char), f64>) -> f64 {
    let mut d = 0.0;
    for (k, &va) in a {
        d += (va - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, &vb) in b {
        if !a.contains_key(k) {
            d += vb;
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::text::build_vocab;
    use crate::model::{Activation, LayerSchedule, ModelDims};
    use crate::train::init_params;

    fn untrained(seed: u64) -> Checkpoint {
        let vocab = build_vocab("to be, or not to be, that is the question", 1, 0.0).unwrap();
        let dims = ModelDims {
            input: 6,
            hidden: 8,
            output: vocab.len(),
            l_w: 2,
            vocab: Some(vocab.len()),
        };
        Checkpoint {
            params: init_params(&dims, &Activation::Relu, &mut Rng::new(seed)).unwrap(),
            schedule: LayerSchedule::new(2, 5).unwrap(),
            vocab: Some(vocab),
        }
    }

    #[test]
    fn untrained_output_is_in_vocab_with_exact_length() {
        let c = untrained(1);
        let v = c.vocab.clone().unwrap();
        let s = generate_text(&c, "to be, or not to be,", 200, &mut Rng::new(2), 1.0).unwrap();
        assert_eq!(s.chars().count(), 200);
        assert!(s.chars().all(|ch| v.contains(ch)));
    }

    #[test]
    fn argmax_mode_is_deterministic() {
        let c = untrained(3);
        let a = generate_text(&c, "xyz", 50, &mut Rng::new(1), 0.0).unwrap();
        let b = generate_text(&c, "xyz", 50, &mut Rng::new(99), 0.0).unwrap();
        assert_eq!(a, b);
        let s1 = generate_text(&c, "to", 50, &mut Rng::new(4), 0.8).unwrap();
        let s2 = generate_text(&c, "to", 50, &mut Rng::new(4), 0.8).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn requires_a_vocabulary() {
        let mut c = untrained(1);
        c.vocab = None;
        assert!(generate_text(&c, "a", 1, &mut Rng::new(0), 1.0).is_err());
    }

    #[test]
    fn bigram_helpers() {
        let a = bigram_distribution("abab");
        assert!((a[&('a', 'b')] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(l1_distance(&a, &a), 0.0);
        let b = bigram_distribution("cc");
        assert!((l1_distance(&a, &b) - 2.0).abs() < 1e-15);
    }
}
