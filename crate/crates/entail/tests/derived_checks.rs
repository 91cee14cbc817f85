//! Behavioral checks that need trained models: fact-score separation,
//! abductive recovery, downstream single-step ranking, training curves,
//! breakdown recounts, and the pinned default constants.

use std::collections::BTreeMap;

use entail::controller::{
    enumerate_states_with_distractors, score_fact, score_steps, score_steps_abductive,
    train_controller_with_curve, ControllerHeads, ControllerTrainConfig, GoalNode, PoolEntry,
    ProofState,
};
use entail::data::pipeline::breakdown_report;
use entail::embed::{
    mean_loss, train_encoder, train_encoder_with_curve, EncoderTrainConfig, StepTriple,
};
use entail::generator::{synth_distractors, synth_singlesteps, SynthConfig};
use entail::metrics::{rank_metrics, DEFAULT_TAU};
use entail::reasoner::ReasonConfig;
use entail::tree::{EntailmentTree, Fact, NodeId, Step};

/// Single-step gold trees built from synthetic triples: the two premises
/// conclude the hypothesis directly.
fn single_step_items(
    triples: &[StepTriple],
    distractor_count: usize,
    seed: u64,
) -> Vec<(EntailmentTree, Vec<Fact>)> {
    let noise = synth_distractors(triples.len() * distractor_count, seed);
    triples
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let tree = EntailmentTree {
                hypothesis: t.conclusion.clone(),
                leaves: vec![
                    Fact::new(NodeId::Sent(1), &t.premise_a),
                    Fact::new(NodeId::Sent(2), &t.premise_b),
                ],
                intermediates: BTreeMap::new(),
                steps: vec![Step::binary(NodeId::Sent(1), NodeId::Sent(2), NodeId::Hypothesis)],
            };
            let distractors: Vec<Fact> = (0..distractor_count)
                .map(|d| {
                    Fact {
                        id: NodeId::Sent(3 + d as u32),
                        text: noise[i * distractor_count + d].clone(),
                        relevance_label: Some(false),
                    }
                })
                .collect();
            (tree, distractors)
        })
        .collect()
}

struct SingleStepStack {
    model: entail::embed::EmbeddingModel,
    heads: ControllerHeads,
    held_out: Vec<(EntailmentTree, Vec<Fact>)>,
}

/// Controller + encoder trained solely on synthetic single steps, with a
/// held-out set for ranking checks.
fn single_step_stack() -> SingleStepStack {
    let triples = synth_singlesteps(&SynthConfig { n: 5000, seed: 21 });
    let enc_cfg = EncoderTrainConfig {
        dim: 48,
        epochs: 8,
        learning_rate: 0.02,
        seed: 1,
        ..Default::default()
    };
    let model = train_encoder(&triples, &enc_cfg).unwrap();

    let train_items = single_step_items(&triples[..1200], 4, 5);
    let ctl_cfg = ControllerTrainConfig {
        epochs: 6,
        learning_rate: 1.0,
        hidden_dim: Some(24),
        lambda: 1.0,
        batch_size: 16,
        seed: 2,
        ..Default::default()
    };
    let heads = train_controller_with_curve(&model, &train_items, &ctl_cfg).unwrap().heads;

    let held: Vec<StepTriple> = synth_singlesteps(&SynthConfig { n: 5600, seed: 77 })
        .into_iter()
        .filter(|t| !triples.contains(t))
        .take(300)
        .collect();
    let held_out = single_step_items(&held, 4, 9);
    SingleStepStack { model, heads, held_out }
}

#[test]
fn trained_fact_scores_separate_relevant_from_distractors() {
    let stack = single_step_stack();
    let mut relevant_sum = 0.0;
    let mut relevant_n = 0usize;
    let mut distractor_sum = 0.0;
    let mut distractor_n = 0usize;
    for (tree, distractors) in &stack.held_out {
        let h = stack.model.encode(&tree.hypothesis).unwrap();
        for fact in &tree.leaves {
            let v = stack.model.encode(&fact.text).unwrap();
            relevant_sum += score_fact(&stack.heads, &h, &v).unwrap();
            relevant_n += 1;
        }
        for fact in distractors {
            let v = stack.model.encode(&fact.text).unwrap();
            distractor_sum += score_fact(&stack.heads, &h, &v).unwrap();
            distractor_n += 1;
        }
    }
    let relevant_mean = relevant_sum / relevant_n as f64;
    let distractor_mean = distractor_sum / distractor_n as f64;
    assert!(
        relevant_mean > distractor_mean,
        "relevant {relevant_mean:.4} vs distractor {distractor_mean:.4}"
    );
    println!("fact scores: relevant {relevant_mean:.4} > distractor {distractor_mean:.4}");

    // Downstream single-step ranking: P@1 of the gold pair among all
    // candidate pairs, at least twice the uniform baseline.
    let mut p1_sum = 0.0;
    let mut baseline_sum = 0.0;
    let mut count = 0usize;
    for (tree, distractors) in &stack.held_out {
        let states =
            enumerate_states_with_distractors(&stack.model, tree, distractors).unwrap();
        let state = &states[0];
        let dist = score_steps(&stack.heads, state).unwrap();
        let mut ranked: Vec<_> = dist.iter().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let gold = tree.steps[0].premise_set();
        let labels: Vec<bool> = ranked
            .iter()
            .map(|((a, b), _)| {
                let set: std::collections::BTreeSet<NodeId> = [*a, *b].into();
                set == gold
            })
            .collect();
        let (p1, _) = rank_metrics(&labels).unwrap();
        p1_sum += p1;
        baseline_sum += 1.0 / dist.len() as f64;
        count += 1;
    }
    let p1 = p1_sum / count as f64;
    let baseline = baseline_sum / count as f64;
    assert!(p1 >= 2.0 * baseline, "P@1 {p1:.4} vs baseline {baseline:.4}");
    println!("single-step P@1 {p1:.4} >= 2x uniform {baseline:.4}");
}

#[test]
fn abductive_top1_recovers_the_true_premise_above_chance() {
    let stack = single_step_stack();
    let mut hits = 0usize;
    let mut total = 0usize;
    let mut baseline_sum = 0.0;
    for (tree, distractors) in &stack.held_out {
        // Pool: the first premise plus distractors; the conclusion is open.
        // Top-1 should pick the true premise as the known premise.
        let h = stack.model.encode(&tree.hypothesis).unwrap();
        let mut pool = vec![
            PoolEntry::from_text(&stack.model, NodeId::Sent(1), &tree.leaves[0].text).unwrap(),
        ];
        for d in distractors {
            pool.push(PoolEntry::from_text(&stack.model, d.id, &d.text).unwrap());
        }
        let state = ProofState {
            hypothesis: tree.hypothesis.clone(),
            hypothesis_vec: h,
            hypothesis_tokens: stack.model.vocab.indices(&tree.hypothesis),
            pool,
            partial_steps: Vec::new(),
            gold_step: None,
            goal: Some(GoalNode {
                text: tree.hypothesis.clone(),
                vector: stack.model.encode(&tree.hypothesis).unwrap(),
                tokens: stack.model.vocab.indices(&tree.hypothesis),
            }),
        };
        let dist = score_steps_abductive(&stack.heads, &state).unwrap();
        let best = dist
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .unwrap()
            .0;
        if best == NodeId::Sent(1) {
            hits += 1;
        }
        total += 1;
        baseline_sum += 1.0 / state.pool.len() as f64;
    }
    let accuracy = hits as f64 / total as f64;
    let baseline = baseline_sum / total as f64;
    assert!(
        accuracy >= 2.0 * baseline,
        "abductive top-1 {accuracy:.4} vs uniform {baseline:.4}"
    );
    println!("abductive top-1 {accuracy:.4} >= 2x uniform {baseline:.4}");
}

#[test]
fn encoder_training_curve_is_monotone_within_a_noise_band() {
    let triples = synth_singlesteps(&SynthConfig { n: 600, seed: 13 });
    let config = EncoderTrainConfig {
        dim: 24,
        epochs: 12,
        learning_rate: 0.02,
        seed: 3,
        ..Default::default()
    };
    let (_, curve) = train_encoder_with_curve(&triples, &config).unwrap();
    // Non-increasing within a 5% band, and strictly lower at the end.
    for pair in curve.windows(2) {
        assert!(pair[1] <= pair[0] * 1.05 + 1e-9, "curve rose: {pair:?}");
    }
    assert!(curve.last().unwrap() < curve.first().unwrap());

    // Held-out mean loss is finite and computable.
    let model = train_encoder(&triples, &config).unwrap();
    let held = synth_singlesteps(&SynthConfig { n: 100, seed: 14 });
    assert!(mean_loss(&model, &held, &config).unwrap().is_finite());
}

#[test]
fn tau_zero_reduces_intermediates_to_alignment_counts() {
    use entail::data::gen::{perturb_tree, random_tree};
    use entail::metrics::{align_trees, eval_intermediates, Similarity};
    for seed in 0..20u64 {
        let gold = random_tree(seed + 40, 7);
        if gold.intermediates.is_empty() {
            continue;
        }
        let pred = perturb_tree(&gold, 1, seed);
        let alignment = align_trees(&pred, &gold).unwrap();
        // With tau = 0 and token-F1 positive on every aligned pair (texts
        // share the relation token), correctness equals alignment size.
        let (f1, _) =
            eval_intermediates(&pred, &gold, &alignment, &Similarity::TokenF1, 0.0).unwrap();
        let matched = alignment.mapping.len() as f64;
        let expected =
            2.0 * matched / (pred.intermediates.len() + gold.intermediates.len()) as f64;
        assert!((f1 - expected).abs() < 1e-12, "seed {seed}: {f1} vs {expected}");
    }
}

#[test]
fn breakdown_buckets_match_an_independent_recount() {
    use entail::data::benchmark::generate_benchmark;
    use entail::metrics::{evaluate_dataset, Similarity};
    let [_, _, test] = generate_benchmark(0);
    // Gold-vs-gold self evaluation over a slice of the test split.
    let slice: Vec<_> = test.examples.iter().take(80).cloned().collect();
    let pairs: Vec<(String, EntailmentTree, EntailmentTree)> = slice
        .iter()
        .map(|e| (e.id.clone(), e.tree.clone(), e.tree.clone()))
        .collect();
    let report = evaluate_dataset(&pairs, &Similarity::TokenF1, DEFAULT_TAU).unwrap();
    let dataset = entail::data::Dataset {
        split: entail::data::Split::Test,
        examples: slice.clone(),
    };
    let rows = breakdown_report(&report, &dataset);

    // Independent recount: tally leaf counts directly.
    let mut recount: BTreeMap<usize, usize> = BTreeMap::new();
    for example in &slice {
        *recount.entry(example.tree.leaves.len()).or_insert(0) += 1;
    }
    assert_eq!(rows.len(), recount.len());
    let mut total = 0usize;
    for row in &rows {
        assert_eq!(row.total, recount[&row.leaves]);
        assert_eq!(row.rate, 1.0);
        total += row.total;
    }
    assert_eq!(total, slice.len());
}

#[test]
fn default_constants_are_pinned() {
    let encoder = EncoderTrainConfig::default();
    assert_eq!(encoder.margin_con, 0.1);
    assert_eq!(encoder.margin_mut, 0.1);

    let controller = ControllerTrainConfig::default();
    assert_eq!(controller.gamma3, 0.1);
    assert_eq!(controller.gamma4, 0.1);
    assert_eq!(controller.gamma5, 0.1);
    assert_eq!(controller.alpha, 1.0);
    assert_eq!(controller.beta, 1.0);

    let reason = ReasonConfig::default();
    assert_eq!(reason.beam_size, 3);
    assert_eq!(reason.top_p, 0.4);
    assert_eq!(reason.top_abd_p, 0.1);
    assert_eq!(reason.delta, 0.001);

    use entail::data::pipeline::{RunConfig, TaskKind};
    let t1 = RunConfig::for_task(TaskKind::Task1, "".into(), "".into());
    assert_eq!(t1.controller.lambda, 0.0);
    let t2 = RunConfig::for_task(TaskKind::Task2, "".into(), "".into());
    assert_eq!(t2.controller.lambda, 1.0);
    assert_eq!(t2.reason.delta, 0.001);
    let t3 = RunConfig::for_task(TaskKind::Task3, "".into(), "".into());
    assert_eq!(t3.reason.delta, 0.1);
    assert_eq!(t3.retrieve_k, 50);
    assert_eq!(t3.refine_limit, 25);
    assert_eq!(t3.tau, 0.28);
    assert_eq!(DEFAULT_TAU, 0.28);
}

#[test]
fn zero_heads_hit_the_combinatorial_baseline() {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    // With zero-initialized heads every pair is equally likely; the argmax
    // falls on a fixed tie-break, so over uniformly placed gold pairs the
    // hit rate is 1/C(n,2) up to sampling error.
    let n = 5usize;
    let pairs = n * (n - 1) / 2;
    let heads = ControllerHeads::zeros(6, None);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
    let trials = 2000usize;
    let mut hits = 0usize;
    for _ in 0..trials {
        let pool: Vec<PoolEntry> = (1..=n as u32)
            .map(|k| PoolEntry {
                id: NodeId::Sent(k),
                text: format!("s{k}"),
                vector: (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                tokens: vec![0],
                relevant: None,
                level: None,
            })
            .collect();
        let state = ProofState {
            hypothesis: "h".into(),
            hypothesis_vec: vec![0.0; 6],
            hypothesis_tokens: vec![0],
            pool,
            partial_steps: Vec::new(),
            gold_step: None,
            goal: None,
        };
        let dist = score_steps(&heads, &state).unwrap();
        let best = dist
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .unwrap()
            .0;
        // Uniformly random gold pair.
        let gold_flat = rng.gen_range(0..pairs);
        let mut idx = 0usize;
        let mut gold = (NodeId::Sent(1), NodeId::Sent(2));
        'outer: for i in 1..=n as u32 {
            for j in (i + 1)..=n as u32 {
                if idx == gold_flat {
                    gold = (NodeId::Sent(i), NodeId::Sent(j));
                    break 'outer;
                }
                idx += 1;
            }
        }
        if best == gold {
            hits += 1;
        }
    }
    let rate = hits as f64 / trials as f64;
    let expected = 1.0 / pairs as f64;
    let sigma = (expected * (1.0 - expected) / trials as f64).sqrt();
    assert!(
        (rate - expected).abs() <= 4.0 * sigma,
        "rate {rate:.4} vs expected {expected:.4} (sigma {sigma:.4})"
    );
}
