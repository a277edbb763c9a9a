//! Test utilities: the forward masking process, and generators for scripted
//! scenarios, suites and configurations.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::backend::{ScriptedScenario, ScriptedSuite, SuiteEntry};
use crate::config::DaedalConfig;
use crate::tokens::{TokenId, Vocab};

/// Forward noising: each token is independently replaced by the mask token
/// with probability `t`.
pub fn forward_mask<R: Rng + ?Sized>(
    tokens: &[TokenId],
    t: f64,
    mask_id: TokenId,
    rng: &mut R,
) -> Vec<TokenId> {
    assert!((0.0..=1.0).contains(&t), "masking rate must lie in [0, 1]");
    tokens
        .iter()
        .map(|&tok| if rng.gen_bool(t) { mask_id } else { tok })
        .collect()
}

/// Vocabulary used by the generators: EOS is 0, MASK is the last id.
pub fn test_vocab() -> Vocab {
    Vocab::new(1000, TokenId(999), TokenId(0)).expect("valid vocab")
}

/// `n` ordinary (non-special) tokens.
pub fn plain_tokens<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<TokenId> {
    (0..n).map(|_| TokenId(rng.gen_range(1..999))).collect()
}

/// A scenario whose answer has `answer_len` tokens and whose terminal
/// window turns to EOS once the response reaches `threshold`.
pub fn sufficient_at(answer_len: usize, threshold: usize, seed: u64) -> ScriptedScenario {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut s = ScriptedScenario::new(plain_tokens(answer_len, &mut rng), threshold);
    s.noise_seed = seed;
    s
}

/// Suite with answers of heterogeneous length. Each prompt becomes
/// sufficient once the whole answer plus a `window`-cell EOS tail fits.
pub fn heterogeneous_suite(
    n: usize,
    min_len: usize,
    max_len: usize,
    window: usize,
    seed: u64,
) -> ScriptedSuite {
    let mut rng = StdRng::seed_from_u64(seed);
    let entries = (0..n)
        .map(|i| {
            let len = rng.gen_range(min_len..=max_len);
            let mut scenario = ScriptedScenario::new(plain_tokens(len, &mut rng), len + window);
            scenario.noise_seed = seed.wrapping_add(i as u64);
            SuiteEntry {
                id: format!("p{i:04}"),
                prompt: vec![TokenId(1 + (i as u32 % 998)), TokenId(1 + (i as u32 / 998))],
                group: None,
                scenario,
            }
        })
        .collect();
    ScriptedSuite {
        vocab: test_vocab(),
        entries,
    }
}

/// Two labelled groups for the terminal-EOS diagnostic at `length`:
/// `sufficient` answers fit with room for a `window`-cell EOS tail,
/// `insufficient` ones do not.
pub fn eos_signal_suite(per_group: usize, length: usize, window: usize, seed: u64) -> ScriptedSuite {
    assert!(length > window, "diagnostic length must exceed the window");
    let mut rng = StdRng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(2 * per_group);
    for i in 0..2 * per_group {
        let sufficient = i < per_group;
        let len = if sufficient {
            rng.gen_range(1..=length - window)
        } else {
            rng.gen_range(length + 1..=4 * length)
        };
        entries.push(SuiteEntry {
            id: format!("{}{i:03}", if sufficient { "s" } else { "i" }),
            prompt: vec![TokenId(500), TokenId(1 + i as u32)],
            group: Some(if sufficient { "sufficient" } else { "insufficient" }.to_string()),
            scenario: ScriptedScenario::new(plain_tokens(len, &mut rng), len + window),
        });
    }
    ScriptedSuite {
        vocab: test_vocab(),
        entries,
    }
}

/// A random but valid configuration sized for fast fuzzing.
pub fn random_config<R: Rng + ?Sized>(rng: &mut R) -> DaedalConfig {
    let l_init = rng.gen_range(1..=64);
    let l_max = l_init + rng.gen_range(0..=160);
    let a: f64 = rng.gen();
    let b: f64 = rng.gen();
    DaedalConfig {
        l_init,
        l_max,
        tau_eos: rng.gen(),
        tau_high: a.max(b),
        tau_low: a.min(b) * rng.gen::<f64>(),
        tau_expand: rng.gen(),
        e_factor: rng.gen_range(2..=16),
        w_eos: rng.gen_range(1..=l_init),
        stage1_increment: if rng.gen_bool(0.5) {
            Some(rng.gen_range(1..=32))
        } else {
            None
        },
        baseline_steps: None,
    }
}

/// A random scenario; about one in five is adversarial (every target cell
/// below 0.1 confidence).
pub fn random_scenario<R: Rng + ?Sized>(rng: &mut R, max_len: usize) -> ScriptedScenario {
    let len = rng.gen_range(0..=max_len);
    let mut target = plain_tokens(len, rng);
    for t in target.iter_mut() {
        if rng.gen_bool(0.05) {
            *t = TokenId(0);
        }
    }
    let mut s = ScriptedScenario::new(target, rng.gen_range(1..=max_len + 64));
    s.noise_seed = rng.gen();
    s.low_eos = rng.gen_range(0.0..0.5);
    if rng.gen_bool(0.2) {
        s.confidence_profile = (0..len).map(|k| (k, rng.gen_range(0.0..0.1))).collect();
    } else {
        for _ in 0..rng.gen_range(0..=len / 2 + 1) {
            if len > 0 {
                s.confidence_profile.insert(rng.gen_range(0..len), rng.gen());
            }
        }
        if rng.gen_bool(0.5) {
            s.confidence_noise = rng.gen_range(0.0..0.6);
        }
    }
    s
}
