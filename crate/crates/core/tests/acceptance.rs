//! One PASS/FAIL line per acceptance criterion. Exits non-zero on any FAIL.

mod common;

use std::time::Instant;

use common::*;
use fscil::bench::{run_benchmark, BenchmarkSpec};
use fscil::data::{synth_generate, ProtocolConfig, SynthSpec};
use fscil::gmm::{fit_gmm, fit_gmm_traced, gmm_classify, Weighting};
use fscil::inference::{dual_classify, ncm_classify};
use fscil::metrics::{aggregate, SessionMetrics};
use fscil::pipeline::{cmd_run, RunConfig};
use fscil::selfopt::{
    absorb_labeled, accumulate_resistance, calibrate_gmm, calibrate_prototypes, resist_for_inference, resist_gmm,
    select_pool, CalibConfig, GroupWeights, ResistConfig,
};
use fscil::stim::{margin_ce_loss, Layout, ToyModel};
use fscil::vector::{mean, Component};
use fscil::DualFeature;
use rand::Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn metric_arithmetic() -> Check {
    let start = Instant::now();
    let row = |v: &[f64]| -> Vec<SessionMetrics> {
        v.iter().enumerate().map(|(t, a)| SessionMetrics::overall_only(t, a / 100.0)).collect()
    };
    let ours = aggregate(&row(&[86.22, 77.89, 74.36, 70.51, 68.14, 65.35, 62.84, 61.20, 59.88])).map_err(|e| e.to_string())?;
    let cec = aggregate(&row(&[72.00, 66.83, 62.97, 59.43, 56.70, 53.73, 51.19, 49.24, 47.63])).map_err(|e| e.to_string())?;
    let (o, c, pd) = (ours.averages.overall * 100.0, cec.averages.overall * 100.0, ours.pd * 100.0);
    let secs = start.elapsed().as_secs_f64();
    ensure((o - 69.60).abs() <= 0.005, || format!("Ours avg {o:.4}"))?;
    ensure((c - 57.75).abs() <= 0.005, || format!("CEC avg {c:.4}"))?;
    ensure((pd - 26.34).abs() <= 0.005, || format!("PD {pd:.4}"))?;
    ensure(secs < 1.0, || format!("{secs:.3}s"))?;
    Ok(format!("Ours {o:.2}, CEC {c:.2}, PD {pd:.2}"))
}

fn oracle_equivalence() -> Check {
    let mut rng = rng(1001);
    let n_inst = 1000;
    for trial in 0..n_inst {
        let n = rng.random_range(2..=30);
        let base = rng.random_range(1..n);
        let dim = rng.random_range(1..=16);
        let h = random_prototypes(&mut rng, n, dim, true);
        let ht = random_prototypes(&mut rng, n, dim, false);
        let (bank, bank_t) = (bank_of(&h, base, dim), bank_of(&ht, base, dim));
        let x = random_dual(&mut rng, dim, true);
        let xt = random_dual(&mut rng, dim, false);
        let cands = |ps: &[fscil::proto::DualPrototype]| ps.iter().map(|p| (p.class_id, p.as_dual())).collect::<Vec<_>>();
        let coarse = oracle_argmax(&x, &cands(&h));
        let ncm = ncm_classify(&x, &bank).map_err(|e| e.to_string())?;
        ensure(ncm == coarse, || format!("ncm trial {trial}"))?;
        let expected = if (coarse as usize) < base { oracle_argmax(&xt, &cands(&ht)) } else { coarse };
        let d = dual_classify(&x, &xt, &bank, &bank_t).map_err(|e| e.to_string())?;
        ensure(d.final_label == expected, || format!("dual trial {trial}"))?;

        let gbank = random_gmm_bank(&mut rng, n.min(12), n.min(12), dim);
        let gc: Vec<(u32, DualFeature)> = gbank
            .class_ids()
            .map(|c| (c, gbank.mean_pair(c, Weighting::Pi).unwrap()))
            .collect();
        let means_ok = gbank.class_ids().all(|c| {
            let p = gbank.get(c, Component::Original).unwrap();
            (0..dim).all(|i| {
                let m: f64 = (0..p.components()).map(|k| p.weights[k] * p.means[k][i]).sum();
                (m - gc[c as usize].1.original[i]).abs() < 1e-12
            })
        });
        ensure(means_ok, || format!("gmm mean trial {trial}"))?;
        let g = gmm_classify(&x, &gbank, Weighting::Pi).map_err(|e| e.to_string())?;
        ensure(g == oracle_argmax(&x, &gc), || format!("gmm trial {trial}"))?;
    }
    Ok(format!("{n_inst} instances x 3 classifiers, 100% agreement"))
}

fn em_correctness() -> Check {
    let mut rng = rng(1002);
    let mut worst_closed = 0.0f64;
    for trial in 0..50 {
        let dim = rng.random_range(1..=8);
        let n = rng.random_range(2..30);
        let samples = blob(&mut rng, &vec![0.3; dim], 0.5, n);
        let p = fit_gmm(&samples, 1, trial).map_err(|e| e.to_string())?;
        for i in 0..dim {
            let mu = samples.iter().map(|x| x[i]).sum::<f64>() / samples.len() as f64;
            let var = samples.iter().map(|x| (x[i] - mu).powi(2)).sum::<f64>() / samples.len() as f64;
            worst_closed = worst_closed.max((p.means[0][i] - mu).abs()).max((p.variances[0][i] - var).abs());
        }
    }
    ensure(worst_closed <= 1e-9, || format!("closed form off by {worst_closed:e}"))?;

    let mut worst_step = 0.0f64;
    let mut worst_simplex = 0.0f64;
    let simplex = |w: &[f64]| (w.iter().sum::<f64>() - 1.0).abs() + if w.iter().all(|&x| x >= 0.0) { 0.0 } else { 1.0 };
    for trial in 0..100 {
        let dim = rng.random_range(1..=6);
        let a: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut samples = blob(&mut rng, &a, 0.3, 15);
        samples.extend(blob(&mut rng, &vec![1.0; dim], 0.6, 15));
        let (p, trace) = fit_gmm_traced(&samples, rng.random_range(1..=4), trial).map_err(|e| e.to_string())?;
        for w in trace.windows(2) {
            worst_step = worst_step.min(w[1] - w[0]);
        }
        worst_simplex = worst_simplex.max(simplex(&p.weights));
        let pool = blob(&mut rng, &a, 0.4, 10);
        worst_simplex = worst_simplex.max(simplex(&calibrate_gmm(&p, &pool, 10.0).weights));
    }
    for trial in 0..20 {
        let mut bank = random_gmm_bank(&mut rng, 8, 6, 4);
        let cfg = ResistConfig { seed: trial, ..ResistConfig::default() };
        resist_gmm(&mut bank, &[6, 7], &cfg, Weighting::Pi).map_err(|e| e.to_string())?;
        for (_, p) in bank.entries() {
            worst_simplex = worst_simplex.max(simplex(&p.weights));
        }
    }
    ensure(worst_step >= -1e-9, || format!("log-likelihood dropped by {worst_step:e}"))?;
    ensure(worst_simplex <= 1e-12, || format!("simplex off by {worst_simplex:e}"))?;
    Ok(format!(
        "closed form {worst_closed:.1e}, min LL step {worst_step:.1e}, simplex {worst_simplex:.1e}"
    ))
}

fn gradient_check() -> Check {
    let mut rng = rng(1003);
    const H: f64 = 1e-6;
    let mut worst = 0.0f64;
    let mut checked = 0;
    while checked < 100 {
        let dim = rng.random_range(2..=8);
        let layout = Layout {
            hidden: rng.random_range(2..=8),
            feature_dim: rng.random_range(2..=8),
            use_sr: rng.random_bool(0.5),
            sr_hidden: rng.random_range(2..=8),
            sr_out: rng.random_range(2..=8),
        };
        let model = ToyModel::new_random(dim, &layout, 3, rng.random_range(0..=2), rng.random_range(1..=2), rng.random());
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if model.forward(&x).pre_activations().any(|z| z.abs() < 1e-3) {
            continue;
        }
        let target = rng.random_range(0..model.rows());
        let delta = rng.random_range(0.0..1.5);
        let (_, grads) = model.loss_and_grad(&x, target, delta);
        let lens: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
        for (slot, &len) in lens.iter().enumerate() {
            for i in 0..len {
                let mut up = model.clone();
                up.params_mut()[slot][i] += H;
                let mut down = model.clone();
                down.params_mut()[slot][i] -= H;
                let fd = (up.loss_and_grad(&x, target, delta).0 - down.loss_and_grad(&x, target, delta).0) / (2.0 * H);
                let an = grads.0[slot][i];
                worst = worst.max((an - fd).abs() / (1.0 + an.abs().max(fd.abs())));
            }
        }
        checked += 1;
    }
    let mut worst_ce = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(2..10);
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
        let y = rng.random_range(0..n);
        let reference = -(z[y].exp() / z.iter().map(|v| v.exp()).sum::<f64>()).ln();
        worst_ce = worst_ce.max((margin_ce_loss(&z, y, 0.0).0 - reference).abs());
    }
    ensure(worst <= 1e-4, || format!("relative error {worst:e}"))?;
    ensure(worst_ce <= 1e-12, || format!("δ=0 loss off by {worst_ce:e}"))?;
    Ok(format!("{checked} instances, max rel err {worst:.1e}, δ=0 CE err {worst_ce:.1e}"))
}

fn selfopt_contracts() -> Check {
    let mut rng = rng(1004);
    for seed in 0..50 {
        let dim = rng.random_range(2..=8);
        let protos = random_prototypes(&mut rng, 9, dim, true);
        let mut bank = bank_of(&protos[..6], 6, dim);
        accumulate_resistance(&mut bank, &protos[6..]).map_err(|e| e.to_string())?;
        bank.extend(protos[6..].to_vec(), 1).map_err(|e| e.to_string())?;
        let pool: Vec<DualFeature> = (0..30).map(|_| random_dual(&mut rng, dim, true)).collect();

        let zero = CalibConfig { alpha: GroupWeights { base: 0.0, incremental: 0.0 }, ..CalibConfig::default() };
        let mut a = bank.clone();
        calibrate_prototypes(&mut a, &pool, &zero).map_err(|e| e.to_string())?;
        let mut b = bank.clone();
        calibrate_prototypes(&mut b, &[], &CalibConfig::default()).map_err(|e| e.to_string())?;
        ensure(a == bank && b == bank, || format!("calibration no-op violated (seed {seed})"))?;

        let cfg = CalibConfig { r: 0.5, ..CalibConfig::default() };
        let mut c = bank.clone();
        calibrate_prototypes(&mut c, &pool, &cfg).map_err(|e| e.to_string())?;
        for p in bank.iter() {
            let alpha = cfg.alpha.for_class(bank.is_base(p.class_id));
            for j in Component::BOTH {
                let picked = select_pool(p.component(j), pool.iter().map(|x| x.channel(j)), cfg.r, cfg.max_pool).unwrap();
                let after = c.get(p.class_id).unwrap().component(j);
                let expected = if picked.is_empty() {
                    p.component(j).clone()
                } else {
                    p.component(j).blend(&mean(picked.iter().map(|&i| pool[i].channel(j))).unwrap(), alpha).unwrap()
                };
                ensure(after == &expected, || format!("not a convex combination (seed {seed})"))?;
            }
        }

        let samples: Vec<DualFeature> = (0..6).map(|_| random_dual(&mut rng, dim, true)).collect();
        let mut batch = bank.clone();
        absorb_labeled(&mut batch, 7, &samples).map_err(|e| e.to_string())?;
        let mut stream = bank.clone();
        for s in &samples {
            absorb_labeled(&mut stream, 7, std::slice::from_ref(s)).map_err(|e| e.to_string())?;
        }
        let diff = Component::BOTH
            .iter()
            .flat_map(|&j| {
                let (x, y) = (batch.get(7).unwrap().component(j).clone(), stream.get(7).unwrap().component(j).clone());
                (0..dim).map(move |i| (x[i] - y[i]).abs())
            })
            .fold(0.0, f64::max);
        ensure(diff <= 1e-9, || format!("absorb streaming differs by {diff:e}"))?;

        let before = bank.clone();
        resist_for_inference(&bank, &ResistConfig { seed, ..ResistConfig::default() }).map_err(|e| e.to_string())?;
        ensure(bank == before, || "resistance mutated the stored bank".into())?;
    }
    Ok("no-ops exact, convex combinations exact, absorb within 1e-9, bank untouched".into())
}

fn end_to_end() -> Check {
    let start = Instant::now();
    let out = run_benchmark(&BenchmarkSpec::standard(42)).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let (bb, fb) = (out.baseline.base_inc.unwrap_or(f64::NAN), out.full.base_inc.unwrap_or(f64::NAN));
    let (bi, fi) = (out.baseline.averages.inc.unwrap_or(f64::NAN), out.full.averages.inc.unwrap_or(f64::NAN));
    let detail = format!(
        "(a) FMO {:.3} -> {:.3}; (b) Base/Inc {bb:.3} -> {fb:.3}, Inc {bi:.4} -> {fi:.4}; {secs:.1}s",
        out.baseline_fmo, out.stimulated_fmo
    );
    ensure(out.stimulated_fmo < out.baseline_fmo, || format!("(a) failed: {detail}"))?;
    ensure((fb - 1.0).abs() < (bb - 1.0).abs() && fi > bi, || format!("(b) failed: {detail}"))?;
    ensure(secs < 60.0, || format!("too slow: {detail}"))?;
    Ok(detail)
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ds = synth_generate(&SynthSpec {
        classes: 12,
        dim: 10,
        train_per_class: 8,
        test_per_class: 8,
        spread: 0.2,
        separation: 1.0,
        seed: 5,
    })
    .map_err(|e| e.to_string())?;
    let gp = dir.path().join("g.fse");
    fscil::data::save_embeddings(&ds, &gp, fscil::data::Format::Binary).map_err(|e| e.to_string())?;
    let protocol = ProtocolConfig { base_class_count: 6, sessions: 3, ways: 2, shots: 3, seed: 8, revisit_shots: 1 };
    let mut configs = vec![RunConfig::baseline(protocol.clone()), RunConfig::full(protocol.clone())];
    let mut gmm = RunConfig::full(protocol);
    gmm.classifier_kind = fscil::pipeline::ClassifierKind::Bgmm;
    configs.push(gmm);
    let mut files = 0;
    for (k, cfg) in configs.iter_mut().enumerate() {
        cfg.g_dataset = Some(gp.clone());
        cfg.g_tilde_dataset = Some(gp.clone());
        cfg.enable_absorb_labeled = true;
        let mut dumps = Vec::new();
        for rep in 0..2 {
            let out = dir.path().join(format!("run{k}_{rep}"));
            cfg.output_dir = Some(out.clone());
            cmd_run(cfg).map_err(|e| e.to_string())?;
            let mut names: Vec<_> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
            names.sort();
            dumps.push(names.iter().map(|n| (n.clone(), std::fs::read(out.join(n)).unwrap())).collect::<Vec<_>>());
        }
        ensure(dumps[0] == dumps[1], || format!("config {k} differs between runs"))?;
        files += dumps[0].len();
    }
    Ok(format!("3 configs x 2 runs, {files} files byte-identical"))
}

fn main() {
    let checks: [Criterion; 7] = [
        ("metric arithmetic vs published rows", metric_arithmetic),
        ("oracle equivalence", oracle_equivalence),
        ("EM correctness", em_correctness),
        ("gradient check", gradient_check),
        ("self-optimization contracts", selfopt_contracts),
        ("end-to-end directional replication", end_to_end),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
