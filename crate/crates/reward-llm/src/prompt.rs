use std::fmt::Write;

use isac_env::SystemConfig;
use isac_reward_dsl::Feature;
use serde::Serialize;

use crate::knowledge::{KnowledgeStore, Snippet};

pub const DEFAULT_OBJECTIVE: &str = "Maximize the downlink sum rate of all users and minimize the \
Cramer-Rao bound (CRB) of the target angle estimate by optimizing the active beamforming matrix of \
the base station, subject to its total transmit power budget.";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromptBundle {
    pub system_description: String,
    pub objective_statement: String,
    pub dsl_reference: String,
    pub retrieved_snippets: Vec<Snippet>,
    pub full_prompt: String,
}

/// Grammar and feature list of the reward language, as shown to the model.
pub fn dsl_reference() -> String {
    let mut s = String::from(
        "Reward expression language (one expression, no statements):\n\
         - numbers: decimal or scientific literals such as 0.5, 10, 1e-3\n\
         - operators: + - * / ^ and parentheses; unary minus binds tighter than ^, ^ is right-associative\n\
         - functions: log10(x), ln(x), exp(x), abs(x), tanh(x), min(x, y), max(x, y), clip(x, lo, hi) with constant lo <= hi\n\
         - division by zero and logs of non-positive values are errors; the result is clipped to [-100, 100]\n\
         Features:\n",
    );
    for f in Feature::ALL {
        let _ = writeln!(s, "- {}: {}", f.name(), f.description());
    }
    s
}

/// Plain-language rendering of the system model.
pub fn system_description(config: &SystemConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "A dual-functional base station with a {}-element half-wavelength uniform linear array serves {} single-antenna downlink users and senses one point target.",
        config.n_antennas, config.n_users
    );
    let _ = writeln!(
        s,
        "Transmit power budget: {} dBm ({:.6} W). Noise power: {:e} W.",
        config.p_max_dbm,
        config.p_max_watts(),
        config.noise_power
    );
    let _ = writeln!(
        s,
        "User channels: Rician with K-factor {}, path loss exponent {}, user distances {:?} m, temporal correlation {}.",
        config.rician_k, config.pathloss_exponent, config.user_distances_m, config.channel_corr
    );
    let _ = writeln!(
        s,
        "Target: azimuth {} degrees, reflection gain magnitude {:e}, {} sensing snapshots per step; the sensing metric is the CRB of the target angle.",
        config.target_angle_deg,
        config.target_gain().norm(),
        config.snapshots
    );
    let _ = writeln!(
        s,
        "Each decision chooses the {}x{} complex beamforming matrix; episodes last {} steps.",
        config.n_antennas, config.n_users, config.episode_len
    );
    s
}

/// Assembles the prompt. Deterministic in its inputs.
pub fn build_prompt(config: &SystemConfig, objective: &str, store: &KnowledgeStore, top_k: usize) -> PromptBundle {
    let system_description = system_description(config);
    let dsl_reference = dsl_reference();
    let query = format!("{objective} reward function magnitude normalization power constraint");
    let retrieved_snippets = store.retrieve(&query, top_k);

    let mut p = String::new();
    p.push_str("You design reward functions for a reinforcement-learning agent that controls an integrated sensing and communication base station.\n\n");
    p.push_str("## System model\n");
    p.push_str(&system_description);
    p.push_str("\n## Optimization problem\n");
    p.push_str(objective);
    p.push_str("\n\n## Reward language\n");
    p.push_str(&dsl_reference);
    p.push_str("\n## Retrieved knowledge\n");
    if retrieved_snippets.is_empty() {
        p.push_str("(none)\n");
    }
    for (i, snip) in retrieved_snippets.iter().enumerate() {
        let _ = writeln!(p, "[{}] {} (score {:.4}): {}", i + 1, snip.doc_id, snip.score, snip.excerpt);
    }
    p.push_str("\n## Instructions\n");
    p.push_str(
        "Write one reward expression in the language above that trades off both objectives.\n\
         - Respect the transmit power constraint of the base station.\n\
         - The communication rate and the CRB differ by orders of magnitude: normalize their magnitudes (for example via log10(crb) and reference values) so neither term dominates.\n\
         - Keep the reward bounded and of order one.\n\
         Respond with exactly one expression inside a single fenced code block (```), and nothing else inside the block.\n",
    );

    PromptBundle {
        system_description,
        objective_statement: objective.to_string(),
        dsl_reference,
        retrieved_snippets,
        full_prompt: p,
    }
}
