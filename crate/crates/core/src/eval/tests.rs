use super::*;

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

// ── BLEU ────────────────────────────────────────────────────────────────

#[test]
fn bleu_identity_is_exactly_100() {
    let h = toks("the cat sat on the mat");
    let v = bleu(std::slice::from_ref(&h), &[vec![h.clone()]], 4).unwrap();
    assert_eq!(v, 100.0);
}

#[test]
fn bleu_disjoint_is_zero() {
    let v = bleu(&[toks("xx yy")], &[vec![toks("aa bb")]], 4).unwrap();
    assert_eq!(v, 0.0);
}

#[test]
fn bleu_mini_corpus_matches_worksheet() {
    // two segments, counted by hand:
    //   seg1 hyp "the cat sat on mat" vs {"the cat sat on the mat",
    //   "a cat was on the mat"}: 1-grams 5/5, 2-grams 3/4 ((on,mat) absent),
    //   3-grams 2/3, 4-grams 1/2
    //   seg2 hyp "there is a dog" vs {"there is a big dog"}: 1-grams 4/4,
    //   2-grams 2/3 ((a,dog) absent), 3-grams 1/2, 4-grams 0/1
    //   pooled: p1 = 9/9, p2 = 5/7, p3 = 3/5, p4 = 1/3 (clipped 1 > 0, no
    //   smoothing); c = 9, closest ref lengths 6 + 5 = 11, BP = exp(1-11/9)
    let hyps = vec![toks("the cat sat on mat"), toks("there is a dog")];
    let refs = vec![
        vec![toks("the cat sat on the mat"), toks("a cat was on the mat")],
        vec![toks("there is a big dog")],
    ];
    let v = bleu(&hyps, &refs, 4).unwrap();
    assert!((v - 49.22838689382166).abs() < 5e-5, "got {v}");
}

#[test]
fn bleu_plus_one_smoothing_on_zero_counts() {
    // "a b c" vs "a x c": p1 = 2/3; p2 = 0/2 -> (0+1)/(2+1); p3 = 0/1 ->
    // 1/2; no 4-grams (excluded); BP = 1
    let v = bleu(&[toks("a b c")], &[vec![toks("a x c")]], 4).unwrap();
    assert!((v - 48.07498567691361).abs() < 5e-5, "got {v}");
}

#[test]
fn bleu_multi_ref_never_below_single_ref_on_fixture() {
    let hyps = vec![toks("what year was she born"), toks("who wrote the book")];
    let single = vec![
        vec![toks("when was she born")],
        vec![toks("who was the author")],
    ];
    let multi = vec![
        vec![toks("when was she born"), toks("what year was she born")],
        vec![toks("who was the author"), toks("who wrote the book")],
    ];
    let s = bleu(&hyps, &single, 4).unwrap();
    let m = bleu(&hyps, &multi, 4).unwrap();
    assert!(m >= s, "multi {m} vs single {s}");
}

#[test]
fn bleu_empty_hypothesis_set_is_error() {
    assert!(matches!(bleu(&[], &[], 4), Err(EvalError::Empty)));
}

#[test]
fn bleu_is_permutation_invariant() {
    let hyps = vec![toks("a b c"), toks("d e f g"), toks("h i")];
    let refs = vec![
        vec![toks("a b c d")],
        vec![toks("d e f")],
        vec![toks("h i j")],
    ];
    let v1 = bleu(&hyps, &refs, 4).unwrap();
    let hyps2 = vec![hyps[2].clone(), hyps[0].clone(), hyps[1].clone()];
    let refs2 = vec![refs[2].clone(), refs[0].clone(), refs[1].clone()];
    let v2 = bleu(&hyps2, &refs2, 4).unwrap();
    assert!((v1 - v2).abs() < 1e-12);
}

// ── ROUGE-L ─────────────────────────────────────────────────────────────

#[test]
fn rouge_identity_and_disjoint() {
    let h = toks("a b c");
    assert_eq!(rouge_l(std::slice::from_ref(&h), &[vec![h.clone()]]).unwrap(), 100.0);
    assert_eq!(rouge_l(&[toks("a b")], &[vec![toks("x y")]]).unwrap(), 0.0);
}

#[test]
fn rouge_hand_lcs_case() {
    // "a b c d" vs "a c d e": LCS = 3, P = R = 3/4 -> F = 75.0
    let v = rouge_l(&[toks("a b c d")], &[vec![toks("a c d e")]]).unwrap();
    assert!((v - 75.0).abs() < 5e-5, "got {v}");
}

#[test]
fn rouge_corpus_mean_matches_worksheet() {
    // second pair: "the cat sat" vs "the big cat sat down": LCS = 3,
    // P = 1, R = 3/5 -> F(beta=1.2) = 2.44*0.6/2.04 = 71.76470588235294
    let hyps = vec![toks("a b c d"), toks("the cat sat")];
    let refs = vec![vec![toks("a c d e")], vec![toks("the big cat sat down")]];
    let v = rouge_l(&hyps, &refs).unwrap();
    assert!((v - 73.38235294117646).abs() < 5e-5, "got {v}");
}

// ── METEOR ──────────────────────────────────────────────────────────────

#[test]
fn meteor_identity_has_single_chunk_penalty() {
    // identical 4-token pair: one chunk, penalty 0.5 * (1/4)^3
    let h = toks("a b c d");
    let v = meteor_simplified(std::slice::from_ref(&h), &[vec![h.clone()]]).unwrap();
    assert!((v - 99.21875).abs() < 5e-5, "got {v}");
}

#[test]
fn meteor_zero_matches_is_zero() {
    let v = meteor_simplified(&[toks("aa bb")], &[vec![toks("cc dd")]]).unwrap();
    assert_eq!(v, 0.0);
}

#[test]
fn meteor_hand_aligned_example() {
    // hyp "the cats sat on mats" vs ref "the cat sat on the mat":
    // exact matches the/sat/on, stem matches cats~cat and mats~mat;
    // pairs (0,0),(1,1),(2,2),(3,3),(4,5) -> 2 chunks, m = 5,
    // P = 1, R = 5/6, F = (5/6)/(0.9 + 0.1*5/6) = 50/59,
    // penalty = 0.5*(2/5)^3 = 0.032 -> 100 * 50/59 * 0.968
    let v = meteor_simplified(
        &[toks("the cats sat on mats")],
        &[vec![toks("the cat sat on the mat")]],
    )
    .unwrap();
    assert!((v - 82.03389830508473).abs() < 5e-5, "got {v}");
}

#[test]
fn meteor_adding_exact_reference_never_lowers_score() {
    let hyp = toks("what year was the treaty signed");
    let base_refs = vec![toks("when was the treaty signed")];
    let v1 = meteor_simplified(
        std::slice::from_ref(&hyp),
        std::slice::from_ref(&base_refs),
    )
    .unwrap();
    let mut more = base_refs;
    more.push(hyp.clone());
    let v2 = meteor_simplified(std::slice::from_ref(&hyp), &[more]).unwrap();
    assert!(v2 >= v1);
}

// ── diversity / agreement ───────────────────────────────────────────────

#[test]
fn unique_counting() {
    let qs: Vec<String> = ["a", "a", "b"].iter().map(|s| s.to_string()).collect();
    assert_eq!(count_unique(&qs), 2);
    assert_eq!(count_unique(&[]), 0);
    let distinct: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
    assert_eq!(count_unique(&distinct), distinct.len());
}

#[test]
fn pearson_perfect_correlations() {
    let x = vec![1.0, 2.0, 3.0, 4.0];
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    let (r, _) = pearson_agreement(&x, &x).unwrap();
    assert!((r - 1.0).abs() < 1e-12);
    let (r, _) = pearson_agreement(&x, &neg).unwrap();
    assert!((r + 1.0).abs() < 1e-12);
}

#[test]
fn pearson_ten_point_fixture_matches_high_precision_oracle() {
    // r and p computed independently at 40-digit precision
    // (p via the regularized incomplete beta form of the t CDF)
    let a = [4.0, 3.5, 5.0, 2.0, 4.5, 3.0, 4.0, 2.5, 5.0, 3.5];
    let b = [4.33, 3.0, 4.67, 2.33, 4.0, 3.33, 3.67, 3.0, 4.33, 3.67];
    let (r, p) = pearson_agreement(&a, &b).unwrap();
    assert!((r - 0.92140116951717836).abs() < 1e-12, "r = {r}");
    assert!((p - 0.00015173296316833732).abs() < 1e-9, "p = {p}");
}

#[test]
fn pearson_constant_series_is_error() {
    let err = pearson_agreement(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap_err();
    assert!(matches!(err, EvalError::UndefinedCorrelation(_)));
}

// ── reference grouping ──────────────────────────────────────────────────

fn gold_example(doc: &str, sent: usize, span: (usize, usize), question: &str) -> IndexedExample {
    IndexedExample {
        doc_id: doc.into(),
        sent_index: sent,
        answer_span: span,
        src_tokens: vec!["w".into()],
        src_ids: vec![1],
        src_ext_ids: vec![1],
        answer: vec![1],
        case: vec![0],
        ner: vec![0],
        inserted: vec![0],
        oov_list: vec![],
        tgt_tokens: toks(question),
        tgt_ids: vec![2, 3],
        tgt_ext_ids: vec![2, 3],
        question_src_ids: vec![1],
    }
}

#[test]
fn multi_and_single_ref_group_differently() {
    let gold = vec![
        gold_example("d", 0, (0, 1), "who wrote it"),
        gold_example("d", 0, (2, 3), "when was it written"),
        gold_example("d", 0, (4, 5), "where was it written"),
    ];
    let gen = Generation {
        doc_id: "d".into(),
        sent_index: 0,
        answer_span: (2, 3),
        question: "when was it made".into(),
    };
    let multi = ReferenceSet::build(&[gen.clone()], &gold, RefSetup::MultiRef).unwrap();
    assert_eq!(multi.references[0].len(), 3);
    let single = ReferenceSet::build(&[gen], &gold, RefSetup::SingleRef).unwrap();
    assert_eq!(single.references[0].len(), 1);
    assert_eq!(single.references[0][0], toks("when was it written"));
    let report = score(&single).unwrap();
    assert_eq!(report.per_hypothesis[0].n_refs, 1);
    let report_multi = score(&multi).unwrap();
    assert_eq!(report_multi.per_hypothesis[0].n_refs, 3);
}

#[test]
fn identity_generation_scores_100() {
    let gold = vec![gold_example("d", 0, (0, 1), "who wrote it")];
    let gen = Generation {
        doc_id: "d".into(),
        sent_index: 0,
        answer_span: (0, 1),
        question: "who wrote it".into(),
    };
    let refset = ReferenceSet::build(&[gen], &gold, RefSetup::MultiRef).unwrap();
    let report = score(&refset).unwrap();
    assert_eq!(report.bleu4, 100.0);
    assert_eq!(report.rouge_l, 100.0);
    assert_eq!(report.unique_count, 1);
}
