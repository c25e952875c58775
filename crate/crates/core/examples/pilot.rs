// Scratch pilot for pinning benchmark parameters; not part of the library.
use std::time::Instant;

use synadv_core::attack::*;
use synadv_core::constraints::*;
use synadv_core::data::*;
use synadv_core::models::*;
use synadv_core::synth::*;
use synadv_core::theory::*;

fn accuracy<S, C: Classifier<S>>(c: &C, data: &[(S, usize)]) -> f64 {
    let ok = data.iter().filter(|(x, y)| c.predict(x) == *y).count();
    ok as f64 / data.len() as f64
}

fn transfer_pilot() {
    let params = GeneParams {
        n_pos: 5500,
        n_neg: 5500,
        len_codons: 100,
        ..Default::default()
    };
    let ds = gen_gene_dataset(&params, 42).unwrap();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, ex) in ds.examples.iter().enumerate() {
        if i % 22 == 0 {
            test.push(ex.clone()); // 250 positives + 250 negatives
        } else {
            train.push(ex.clone());
        }
    }
    let train_ds = LabeledDataset::new(train, 2, ds.vocabulary.clone()).unwrap();
    let feats: Vec<Vec<f64>> = train_ds
        .examples
        .iter()
        .map(|(s, _)| Featurizer::KmerFreq { k: 4 }.apply(s, &ds.vocabulary).unwrap())
        .collect();
    let ys: Vec<usize> = train_ds.examples.iter().map(|(_, y)| *y).collect();
    let cs = ConstraintSet::new(vec![(DistanceComponent::CodonSynonymy, 0.0)]);
    let config = AttackConfig {
        tau: 0.9,
        beam: 1,
        delta_max: 0.5,
        ..Default::default()
    };
    let nb = train_naive_bayes_featurized(
        &train_ds,
        &Featurizer::KmerCounts { k: 4 },
        NbOptions::default(),
    )
    .unwrap();
    let nb_c = NbSequenceClassifier {
        model: &nb,
        featurizer: Featurizer::KmerCounts { k: 4 },
        vocab: &ds.vocabulary,
    };
    let mut nb_advs = Vec::new();
    for (seq, y) in &test {
        let proposer = CodonProposer::for_sequence(seq).unwrap();
        let rn = beam_search_attack(
            seq,
            &nb_c,
            &proposer,
            &cs,
            &Objective::untargeted(*y),
            &config,
            &ds.vocabulary,
        )
        .unwrap();
        nb_advs.push((rn.x_adv, *y));
    }
    for (l2, epochs, lr) in [
        (1e-4, 120, 0.5),
        (1e-6, 300, 1.0),
        (0.0, 600, 2.0),
        (1e-3, 120, 0.5),
    ] {
        let lg = train_logistic_on_vectors(
            &feats,
            &ys,
            2,
            LogisticHyper { lr, epochs, l2 },
            "kmer4-freq",
        )
        .unwrap();
        let lg_c = LogisticSequenceClassifier {
            model: &lg,
            featurizer: Featurizer::KmerFreq { k: 4 },
            vocab: &ds.vocabulary,
        };
        let mut lg_advs = Vec::new();
        let mut lg_fracs = Vec::new();
        let mut tau_hits = 0;
        for (seq, y) in &test {
            let proposer = CodonProposer::for_sequence(seq).unwrap();
            let rl = beam_search_attack(
                seq,
                &lg_c,
                &proposer,
                &cs,
                &Objective::untargeted(*y),
                &config,
                &ds.vocabulary,
            )
            .unwrap();
            tau_hits += rl.tau_reached as usize;
            lg_fracs.push(rl.fraction_replaced);
            lg_advs.push((rl.x_adv, *y));
        }
        let nb_nb = accuracy(&nb_c, &nb_advs);
        let nb_lg = accuracy(&lg_c, &nb_advs);
        let lg_nb = accuracy(&nb_c, &lg_advs);
        let lg_lg = accuracy(&lg_c, &lg_advs);
        let clean_nb = accuracy(&nb_c, &test);
        let clean_lg = accuracy(&lg_c, &test);
        let ok = nb_lg > lg_lg && nb_lg < clean_lg && lg_nb > nb_nb && lg_nb < clean_nb;
        println!(
            "l2={l2:<7} ep={epochs} lr={lr}: cleanNB={clean_nb:.3} cleanLG={clean_lg:.3} | (NB,NB)={nb_nb:.3} (NB,LG)={nb_lg:.3} (LG,NB)={lg_nb:.3} (LG,LG)={lg_lg:.3} | tau_hits={tau_hits}/500 mean_frac={:.3} | strict_pattern={ok}",
            lg_fracs.iter().sum::<f64>() / lg_fracs.len() as f64,
        );
    }
}

fn main() {
    if std::env::args().any(|a| a == "transfer") {
        transfer_pilot();
        return;
    }
    let t0 = Instant::now();
    // ---- gene task ----
    let params = GeneParams {
        n_pos: 5500,
        n_neg: 5500,
        len_codons: 100,
        ..Default::default()
    };
    let ds = gen_gene_dataset(&params, 42).unwrap();
    // split: first 5000 of each class train, next 500 test
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, ex) in ds.examples.iter().enumerate() {
        if i % 11 == 0 && test.len() < 1000 {
            test.push(ex.clone());
        } else {
            train.push(ex.clone());
        }
    }
    let train_ds = LabeledDataset::new(train, 2, ds.vocabulary.clone()).unwrap();
    println!("gen+split: {:?}", t0.elapsed());

    let nb = train_naive_bayes_featurized(
        &train_ds,
        &Featurizer::KmerCounts { k: 4 },
        NbOptions::default(),
    )
    .unwrap();
    let nb_c = NbSequenceClassifier {
        model: &nb,
        featurizer: Featurizer::KmerCounts { k: 4 },
        vocab: &ds.vocabulary,
    };
    let t1 = Instant::now();
    let feats: Vec<Vec<f64>> = train_ds
        .examples
        .iter()
        .map(|(s, _)| Featurizer::KmerFreq { k: 4 }.apply(s, &ds.vocabulary).unwrap())
        .collect();
    let ys: Vec<usize> = train_ds.examples.iter().map(|(_, y)| *y).collect();
    let lg = train_logistic_on_vectors(
        &feats,
        &ys,
        2,
        LogisticHyper {
            lr: 0.5,
            epochs: 120,
            l2: 1e-4,
        },
        "kmer4-freq",
    )
    .unwrap();
    println!("logistic train: {:?}", t1.elapsed());
    let lg_c = LogisticSequenceClassifier {
        model: &lg,
        featurizer: Featurizer::KmerFreq { k: 4 },
        vocab: &ds.vocabulary,
    };
    println!("NB clean = {}", accuracy(&nb_c, &test));
    println!("LG clean = {}", accuracy(&lg_c, &test));

    let cs = ConstraintSet::new(vec![(DistanceComponent::CodonSynonymy, 0.0)]);
    let config = AttackConfig {
        tau: 0.9,
        beam: 1,
        delta_max: 0.5,
        ..Default::default()
    };
    let t2 = Instant::now();
    let mut nb_advs = Vec::new();
    let mut fractions = Vec::new();
    let mut cod_fracs = Vec::new();
    for (seq, y) in &test {
        let proposer = CodonProposer::for_sequence(seq).unwrap();
        let res = beam_search_attack(
            seq,
            &nb_c,
            &proposer,
            &cs,
            &Objective::untargeted(*y),
            &config,
            &ds.vocabulary,
        )
        .unwrap();
        fractions.push(res.fraction_replaced);
        cod_fracs.push(res.edits.len() as f64 / 100.0);
        nb_advs.push((res.x_adv, *y));
    }
    println!("NB attack on {} seqs: {:?}", test.len(), t2.elapsed());
    let mut sorted = fractions.clone();
    sorted.sort_by(f64::total_cmp);
    println!(
        "NB adv acc = {} | median nt frac = {} | mean nt frac = {} | mean codon frac = {}",
        accuracy(&nb_c, &nb_advs),
        sorted[sorted.len() / 2],
        fractions.iter().sum::<f64>() / fractions.len() as f64,
        cod_fracs.iter().sum::<f64>() / cod_fracs.len() as f64,
    );
    println!("LG on NB-crafted = {}", accuracy(&lg_c, &nb_advs));

    let t3 = Instant::now();
    let mut lg_advs = Vec::new();
    for (seq, y) in &test {
        let proposer = CodonProposer::for_sequence(seq).unwrap();
        let res = beam_search_attack(
            seq,
            &lg_c,
            &proposer,
            &cs,
            &Objective::untargeted(*y),
            &config,
            &ds.vocabulary,
        )
        .unwrap();
        lg_advs.push((res.x_adv, *y));
    }
    println!("LG attack: {:?}", t3.elapsed());
    println!("LG adv acc (whitebox) = {}", accuracy(&lg_c, &lg_advs));
    println!("NB on LG-crafted = {}", accuracy(&nb_c, &lg_advs));

    // RND control at matched codon fraction
    let mean_cod = cod_fracs.iter().sum::<f64>() / cod_fracs.len() as f64;
    let mut rnd = Vec::new();
    for (i, (seq, y)) in test.iter().enumerate() {
        let proposer = CodonProposer::for_sequence(seq).unwrap();
        let out = random_perturb(seq, &proposer, &cs, mean_cod, 1000 + i as u64).unwrap();
        rnd.push((out, *y));
    }
    println!("NB RND acc = {} at codon frac {}", accuracy(&nb_c, &rnd), mean_cod);

    // Greedy-P paired comparison (b=5 beam vs greedy)
    let t4 = Instant::now();
    let config5 = AttackConfig {
        beam: 5,
        ..config.clone()
    };
    let sub: Vec<_> = test.iter().take(250).cloned().collect();
    let mut beam5_advs = Vec::new();
    let mut greedy_advs = Vec::new();
    for (seq, y) in &sub {
        let proposer = CodonProposer::for_sequence(seq).unwrap();
        let r5 = beam_search_attack(
            seq,
            &nb_c,
            &proposer,
            &cs,
            &Objective::untargeted(*y),
            &config5,
            &ds.vocabulary,
        )
        .unwrap();
        beam5_advs.push((r5.x_adv, *y));
        let rg = greedy_p_attack(
            seq,
            &nb_c,
            &proposer,
            &cs,
            &Objective::untargeted(*y),
            &config,
            &ds.vocabulary,
        )
        .unwrap();
        greedy_advs.push((rg.x_adv, *y));
    }
    println!("beam5+greedy on 250: {:?}", t4.elapsed());
    println!(
        "beam5 adv acc = {} | greedyP adv acc = {}",
        accuracy(&nb_c, &beam5_advs),
        accuracy(&nb_c, &greedy_advs)
    );

    // ---- graph task ----
    let t5 = Instant::now();
    for (p0, pin) in [(0.3, 0.9), (0.35, 0.9), (0.4, 0.95)] {
        let gp = GraphParams {
            n_per_class: 400,
            n_vertices: 20,
            edge_prob_class0: p0,
            edge_prob_class1: p0,
            planted: Some(PlantedBlock { size: 8, prob: pin }),
        };
        let graphs = gen_graph_dataset(&gp, 7).unwrap();
        let (gtrain, gtest): (Vec<_>, Vec<_>) = {
            let mut tr = Vec::new();
            let mut te = Vec::new();
            for (i, g) in graphs.iter().enumerate() {
                if i % 10 == 0 {
                    te.push(g.clone())
                } else {
                    tr.push(g.clone())
                }
            }
            (tr, te)
        };
        let xs: Vec<Vec<f64>> = gtrain.iter().map(|(g, _)| graph_features(g)).collect();
        let ys: Vec<usize> = gtrain.iter().map(|(_, y)| *y).collect();
        let gm = train_logistic_on_vectors(
            &xs,
            &ys,
            2,
            LogisticHyper {
                lr: 0.5,
                epochs: 200,
                l2: 1e-4,
            },
            "adjacency-flatten",
        )
        .unwrap();
        let gc = LogisticGraphClassifier { model: &gm };
        let clean = accuracy(&gc, &gtest);
        let mut advs = Vec::new();
        for (g, y) in &gtest {
            let res = beam_search_graph_attack(
                g,
                &gc,
                &Objective::untargeted(*y),
                &AttackConfig {
                    tau: 0.9,
                    beam: 1,
                    delta_max: 0.5,
                    ..Default::default()
                },
            )
            .unwrap();
            advs.push((res.x_adv, *y));
        }
        let adv = accuracy(&gc, &advs);
        println!("graph p0={p0} pin={pin}: clean = {clean}, adv = {adv}");
    }
    println!("graphs: {:?}", t5.elapsed());

    // ---- theory: criterion 5 ----
    let t6 = Instant::now();
    let tp = TheoryParams {
        d_docs: 200,
        len_tokens: 50,
        v_uninformative: 2000,
        v_informative: 0,
        p_max: 1.0 / 2000.0,
        r: 0.0,
        eta: 1.0,
        s_synonyms: 0,
        rho: 0.05,
        gamma: 0.5,
    };
    let report = mc_verify_spurious(&tp, 50, 31).unwrap();
    print!("{}", report.render());
    println!("prop1 mc: {:?}", t6.elapsed());

    // ---- theory: criterion 7 grid ----
    let t7 = Instant::now();
    for s in [2usize, 3, 5] {
        let tp = TheoryParams {
            d_docs: 200,
            len_tokens: 50,
            v_uninformative: 2000,
            v_informative: 50,
            p_max: 1.0 / 2000.0,
            r: 0.1,
            eta: 1.0,
            s_synonyms: s,
            rho: 0.05,
            gamma: 0.5,
        };
        for t in [2u64, 3, 4] {
            let report = mc_verify_synonym_attack(&tp, t, 400, 77).unwrap();
            let c = &report.checks[0];
            println!(
                "prop3 S={s} T={t}: bound = {:.4}, empirical = {:.4}, pass = {} (n = {})",
                c.predicted, c.empirical, c.pass, report.trials
            );
        }
    }
    println!("prop3 grid: {:?}", t7.elapsed());

    // ---- theory: criterion 8 ----
    let t8 = Instant::now();
    let tp8 = TheoryParams {
        d_docs: 800,
        len_tokens: 50,
        v_uninformative: 2000,
        v_informative: 50,
        p_max: 1.0 / 2000.0,
        r: 0.1,
        eta: 1.0,
        s_synonyms: 0,
        rho: 0.05,
        gamma: 0.5,
    };
    let (ds8, _meta) = gen_theory_dataset(&tp8, 5).unwrap();
    let nb8 = train_naive_bayes(&ds8, NbOptions::default()).unwrap();
    let budget = insertion_budget(
        tp8.r,
        tp8.len_tokens as u64,
        tp8.eta,
        tp8.p_actual(),
        tp8.d_tokens(),
        tp8.rho,
        tp8.v_uninformative as u64,
    )
    .unwrap();
    let sampler = TheorySampler::new(tp8.clone()).unwrap();
    let mut rng = stream_rng(123, 20);
    let mut attacked = 0;
    let mut flipped = 0;
    for _ in 0..500 {
        let doc = sampler.sample_doc(0, &mut rng);
        let x = token_counts(&doc, ds8.vocabulary.size(), false);
        if nb8.predict(&x).unwrap() != 0 {
            continue;
        }
        attacked += 1;
        let res = concatenative_attack(&doc, &nb8, 0.0, budget as usize, 1).unwrap();
        let xa = token_counts(&res.x_adv, ds8.vocabulary.size(), false);
        if nb8.predict(&xa).unwrap() == 1 {
            flipped += 1;
        }
    }
    println!(
        "prop2: budget = {budget}, flip rate = {} ({} attacked), need >= {}",
        flipped as f64 / attacked as f64,
        attacked,
        1.0 - tp8.rho - 0.05
    );
    println!("prop2: {:?}", t8.elapsed());
    println!("total: {:?}", t0.elapsed());
}
