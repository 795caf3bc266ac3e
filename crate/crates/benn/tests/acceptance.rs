//! Acceptance suite: one pass/fail line per criterion, non-zero exit if any fail.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use benn::container::{checkpoint_bytes, export_bytes, network_from_export};
use benn::experiments::{
    ensemble_direction, random_robustness, stability_comparison, toy_task, toy_train_config, trained_robustness,
    TOY_BNN, TOY_MLP, TOY_MLP_WIDE,
};
use benn_core::analysis::{compute_b, verify_theorem1, verify_theorem2, Estimate, Regime};
use benn_core::bitcore::{binary_gemm, im2col_binary_conv, pack, xnor_dot, PackedBitTensor};
use benn_core::ensemble::{bagging_sample, SampleWeights};
use benn_core::nn::{predict, softmax_cross_entropy, Mode, Network, NetworkConfig, Trainer};
use benn_core::{rng, RealTensor};
use rand::Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok { Ok(detail) } else { Err(detail) }
}

fn within(elapsed: Duration, limit_secs: u64, detail: String) -> Outcome {
    if elapsed > Duration::from_secs(limit_secs) {
        Err(format!("{detail}; took {elapsed:.1?}, limit {limit_secs}s"))
    } else {
        Ok(format!("{detail}; {elapsed:.1?}"))
    }
}

fn separated(hi: &Estimate, lo: &Estimate) -> bool {
    hi.exceeds(lo, 3.0)
}

fn show(e: &Estimate) -> String {
    format!("{:.4e}±{:.1e}", e.mean, e.std_err)
}

// ---------------------------------------------------------------- 1

fn signs(bits: &[bool]) -> Vec<f32> {
    bits.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect()
}

fn packed(shape: &[usize], bits: &[bool]) -> PackedBitTensor {
    pack(&RealTensor::new(shape, signs(bits)).unwrap()).unwrap()
}

fn dense_dot(a: &[f32], b: &[f32]) -> i64 {
    a.iter().zip(b).map(|(x, y)| (x * y) as i64).sum()
}

fn dense_conv(x: &[f32], k: &[f32], (c, h, w): (usize, usize, usize), f: usize, kk: usize, stride: usize, pad: usize) -> Vec<i32> {
    let (oh, ow) = ((h + 2 * pad - kk) / stride + 1, (w + 2 * pad - kk) / stride + 1);
    let mut out = vec![0i32; f * oh * ow];
    for o in 0..f {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = 0f32;
                for ch in 0..c {
                    for di in 0..kk {
                        for dj in 0..kk {
                            let y = (i * stride + di) as isize - pad as isize;
                            let z = (j * stride + dj) as isize - pad as isize;
                            let v = if y < 0 || z < 0 || y >= h as isize || z >= w as isize {
                                -1.0
                            } else {
                                x[(ch * h + y as usize) * w + z as usize]
                            };
                            acc += v * k[((o * c + ch) * kk + di) * kk + dj];
                        }
                    }
                }
                out[(o * oh + i) * ow + j] = acc as i32;
            }
        }
    }
    out
}

fn kernel_case(case: u64) -> Result<(), String> {
    let mut r = rng::stream(0xacce, case);
    let mut bits = |n: usize| -> Vec<bool> { (0..n).map(|_| r.random::<bool>()).collect() };
    match case % 3 {
        0 => {
            let n = 1 + (case as usize * 7919) % 700;
            let (a, b) = (bits(n), bits(n));
            let got = xnor_dot(&packed(&[n], &a), &packed(&[n], &b)).unwrap();
            if got != dense_dot(&signs(&a), &signs(&b)) {
                return Err(format!("xnor_dot n={n}"));
            }
        }
        1 => {
            let (o, b, n) = (1 + case as usize % 5, 1 + case as usize % 4, 1 + (case as usize * 31) % 200);
            let (w, x) = (bits(o * n), bits(b * n));
            let out = binary_gemm(&packed(&[o, n], &w), &packed(&[b, n], &x)).unwrap();
            let (ws, xs) = (signs(&w), signs(&x));
            for i in 0..b {
                for j in 0..o {
                    if out.get2(i, j) as i64 != dense_dot(&xs[i * n..(i + 1) * n], &ws[j * n..(j + 1) * n]) {
                        return Err(format!("binary_gemm {o}x{n} by {b}x{n}"));
                    }
                }
            }
        }
        _ => {
            let c = 1 + case as usize % 3;
            let kk = 1 + (case as usize / 3) % 3;
            let stride = 1 + (case as usize / 9) % 2;
            let pad = (case as usize / 18) % 2;
            let f = 1 + (case as usize / 36) % 3;
            let mut h = kk + (case as usize / 7) % 5;
            while (h + 2 * pad - kk) % stride != 0 {
                h += 1;
            }
            let w = h;
            let (x, k) = (bits(c * h * w), bits(f * c * kk * kk));
            let out = im2col_binary_conv(&packed(&[c, h, w], &x), &packed(&[f, c, kk, kk], &k), stride, pad).unwrap();
            if out.values != dense_conv(&signs(&x), &signs(&k), (c, h, w), f, kk, stride, pad) {
                return Err(format!("conv c={c} h={h} k={kk} s={stride} p={pad} f={f}"));
            }
        }
    }
    Ok(())
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    for case in 0..10_000u64 {
        kernel_case(case)?;
    }
    let mut exhaustive = 0u64;
    for n in 1..=12usize {
        for a in 0u64..(1 << n) {
            for b in 0u64..(1 << n) {
                let pa = PackedBitTensor::from_words(&[n], vec![a]).unwrap();
                let pb = PackedBitTensor::from_words(&[n], vec![b]).unwrap();
                let dense: i64 = (0..n).map(|i| if (a >> i & 1) == (b >> i & 1) { 1 } else { -1 }).sum();
                if xnor_dot(&pa, &pb).unwrap() != dense {
                    return Err(format!("exhaustive n={n} a={a:b} b={b:b}"));
                }
                exhaustive += 1;
            }
        }
    }
    within(t.elapsed(), 60, format!("10000 random cases and {exhaustive} exhaustive pairs exact"))
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let table = [(1.5, 1.25), (1.0, 1.0), (0.5, 0.59), (0.1, 0.13), (0.01, 0.013), (0.001, 0.0013)];
    let mut cells = Vec::new();
    for (i, (sigma, paper)) in table.into_iter().enumerate() {
        let b = compute_b(sigma).map_err(|e| e.to_string())?;
        let ok = if i >= 4 { (b - paper).abs() <= 0.05 * paper } else { (b - paper).abs() <= 0.01 };
        cells.push(format!("σ={sigma}:{b:.4}"));
        if !ok {
            return Err(format!("σ={sigma}: B={b} vs {paper}"));
        }
    }
    within(t.elapsed(), 120, cells.join(" "))
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let ks = [2, 4, 8, 16];
    let mut worst_rel = 0f64;
    let mut worst_ratio = 1f64;
    let mut threshold = String::new();
    for (i, sigma) in [0.1, 0.5].into_iter().enumerate() {
        let rep = verify_theorem1(256, 1.0, sigma, &ks, 100_000, 7 + i as u64).map_err(|e| e.to_string())?;
        for row in &rep.rows {
            worst_rel = worst_rel.max(row.rel_error());
            if row.rel_error() > 0.05 {
                return Err(format!("σ={sigma} {} K={}: {} vs {}", row.regime, row.k, row.measured, row.closed_form));
            }
        }
        for regime in [Regime::ActivationBinary, Regime::WeightBinary, Regime::BothBinary] {
            let single = rep.get(regime, 1).unwrap().measured;
            for &k in &ks {
                let ratio = rep.get(regime, k).unwrap().measured * k as f64 / single;
                if (ratio - 1.0).abs() > (worst_ratio - 1.0).abs() {
                    worst_ratio = ratio;
                }
                if !(0.9..=1.1).contains(&ratio) {
                    return Err(format!("σ={sigma} {regime} K={k}: bagging ratio {ratio:.3}"));
                }
            }
        }
        if sigma == 0.1 {
            let real = rep.get(Regime::Real, 1).unwrap().measured;
            let (k16, k8) = (rep.get(Regime::BothBinary, 16).unwrap().measured, rep.get(Regime::BothBinary, 8).unwrap().measured);
            threshold = format!("real {real:.3}, K=16 {k16:.3}, K=8 {k8:.3}");
            if !(k16 < real && k8 >= real) {
                return Err(format!("threshold check failed: {threshold}"));
            }
        }
    }
    within(
        t.elapsed(),
        300,
        format!("max rel err {worst_rel:.4}, worst bagging ratio {worst_ratio:.3}, {threshold}"),
    )
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let t = Instant::now();
    let mut rates = Vec::new();
    for (depth, widths) in [(2, vec![16, 16, 1]), (3, vec![16, 16, 16, 1])] {
        for c in verify_theorem2(&widths, 1.0, 0.5, 10_000, 64, 40 + depth).map_err(|e| e.to_string())? {
            rates.push(format!("L{depth}/{}:{:.4}", c.regime, c.satisfaction_rate));
            if c.satisfaction_rate < 0.99 {
                return Err(format!("L={depth} {}: satisfied in {:.4} of trials", c.regime, c.satisfaction_rate));
            }
        }
    }
    within(t.elapsed(), 180, rates.join(" "))
}

// ---------------------------------------------------------------- 5

fn htanh(v: f64) -> f64 {
    v.clamp(-1.0, 1.0)
}

fn sgn(v: f64) -> f64 {
    if v >= 0.0 { 1.0 } else { -1.0 }
}

struct Dense {
    w: Vec<f64>,
    b: Vec<f64>,
    n: usize,
}

impl Dense {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.b.iter().enumerate().map(|(r, b)| b + (0..self.n).map(|c| self.w[r * self.n + c] * x[c]).sum::<f64>()).collect()
    }
}

/// Sign replaced by `sign(z0) + htanh(z) - htanh(z0)`: same value at the
/// reference point, clipped-identity slope around it.
fn surrogate_act(z: &[f64], z0: &[f64]) -> Vec<f64> {
    z.iter().zip(z0).map(|(&v, &r)| sgn(r) + htanh(v) - htanh(r)).collect()
}

fn surrogate_loss(l: &[Dense], z1: &[f64], z1_ref: &[f64], label: usize) -> f64 {
    let z2_ref = l[1].apply(&surrogate_act(z1_ref, z1_ref));
    let z2 = l[1].apply(&surrogate_act(z1, z1_ref));
    let logits = l[2].apply(&surrogate_act(&z2, &z2_ref));
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln() - logits[label]
}

fn criterion_5() -> Outcome {
    let cfg = NetworkConfig::parse("input 8\nclasses 3\nfc width=10\nbinact\nfc width=6\nbinact\nfc width=3\n").unwrap();
    let mut net = Network::new(&cfg, 21).unwrap();
    let mut r = rng::stream(21, 1);
    let x = RealTensor::from_fn(&[1, 8], |_| 1.5 * rng::normal_f32(&mut r));
    let label = 2;
    let logits = net.forward(&x, Mode::Eval).unwrap();
    let (_, dlogits) = softmax_cross_entropy(&logits, &[label], None).unwrap();
    let grad = net.backward_trace(&dlogits).unwrap()[1].clone();
    let state = net.state();
    let layer = |i: usize| {
        let w = state.iter().find(|a| a.name == format!("{i}.weight")).unwrap();
        let b = state.iter().find(|a| a.name == format!("{i}.bias")).unwrap();
        Dense { w: w.values.iter().map(|&v| f64::from(v)).collect(), b: b.values.iter().map(|&v| f64::from(v)).collect(), n: w.shape[1] }
    };
    let layers = [layer(0), layer(2), layer(4)];
    let z1 = layers[0].apply(&x.values().iter().map(|&v| f64::from(v)).collect::<Vec<_>>());
    let (mut zeros, mut matched, mut worst) = (0, 0, 0f64);
    for i in 0..z1.len() {
        let g = f64::from(grad.values()[i]);
        if z1[i].abs() > 1.0 {
            if g != 0.0 {
                return Err(format!("unit {i} at {:.3} has gradient {g}", z1[i]));
            }
            zeros += 1;
            continue;
        }
        let eps = 1e-6;
        let (mut p, mut m) = (z1.clone(), z1.clone());
        p[i] += eps;
        m[i] -= eps;
        let fd = (surrogate_loss(&layers, &p, &z1, label) - surrogate_loss(&layers, &m, &z1, label)) / (2.0 * eps);
        worst = worst.max((fd - g).abs());
        matched += 1;
    }
    if zeros == 0 || matched == 0 {
        return Err(format!("degenerate probe: {zeros} saturated, {matched} active units"));
    }
    check(worst < 1e-4, format!("{zeros} saturated units exactly 0, {matched} active within {worst:.1e}"))
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Outcome {
    let t = Instant::now();
    let r = ensemble_direction(&[0, 1, 2, 3, 4], 5, 20).map_err(|e| e.to_string())?;
    let (single, bag, boost) = r.means();
    let detail = format!(
        "single {:.2}%, bagging-5 {:.2}% ({:+.2}), boosting-5 {:.2}% ({:+.2} vs bagging)",
        100.0 * single,
        100.0 * bag,
        100.0 * (bag - single),
        100.0 * boost,
        100.0 * (boost - bag)
    );
    if bag - single < 0.02 || boost < bag - 0.01 {
        return Err(detail);
    }
    within(t.elapsed(), 600, detail)
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Outcome {
    let cfg = NetworkConfig::parse(TOY_BNN).unwrap();
    let r = stability_comparison(&cfg, &[0, 1, 2, 3, 4], 5, 30, 1e-3).map_err(|e| e.to_string())?;
    let (single, ens) = r.means();
    check(
        ens <= 0.5 * single,
        format!("last-20 std single {:.3}%, BENN-5 {:.3}% (ratio {:.2})", 100.0 * single, 100.0 * ens, ens / single),
    )
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Outcome {
    let t = Instant::now();
    let rand = random_robustness(0.01, 50, 20, 200, 0).map_err(|e| e.to_string())?;
    let cfg = NetworkConfig::parse(TOY_MLP).unwrap();
    let trained = trained_robustness(&cfg, 0.01, 5, 20, 50, 0).map_err(|e| e.to_string())?;
    let detail = format!(
        "Eq1 BNN {} > W1A2 {} > DNN {}; Eq2 BNN {} ≥ BENN-5 {}",
        show(&rand.binary),
        show(&rand.quantized),
        show(&rand.real),
        show(&trained.single),
        show(&trained.ensemble)
    );
    let ok = separated(&rand.binary, &rand.quantized)
        && separated(&rand.quantized, &rand.real)
        && separated(&trained.single, &trained.ensemble);
    if !ok {
        return Err(detail);
    }
    within(t.elapsed(), 300, detail)
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Outcome {
    let m = 10_000;
    let u = SampleWeights::uniform(m).unwrap();
    let mut fractions = Vec::new();
    for seed in 0..20u64 {
        let s = bagging_sample(m, &u, &mut rng::stream(seed, 0xb00)).map_err(|e| e.to_string())?;
        let mut seen = vec![false; m];
        s.iter().for_each(|&i| seen[i] = true);
        fractions.push(seen.iter().filter(|&&b| b).count() as f64 / m as f64);
    }
    let (lo, hi) = fractions.iter().fold((1f64, 0f64), |(lo, hi), &f| (lo.min(f), hi.max(f)));
    check(
        fractions.iter().all(|f| (f - 0.632).abs() <= 0.02),
        format!("distinct fraction over 20 seeds in [{lo:.4}, {hi:.4}]"),
    )
}

// ---------------------------------------------------------------- 10

fn criterion_10() -> Outcome {
    let cfg = NetworkConfig::parse(TOY_MLP_WIDE).unwrap();
    let (train, test) = toy_task(0).map_err(|e| e.to_string())?;
    let small = train.subset(&(0..600).collect::<Vec<_>>());
    let mut trainer = Trainer::new(Network::new(&cfg, 0).unwrap(), toy_train_config(1, 0));
    trainer.run_epoch(&small, &(0..small.len()).collect::<Vec<_>>(), None).map_err(|e| e.to_string())?;
    let net = trainer.into_network();
    let (float, packed) = (checkpoint_bytes(&net), export_bytes(&net));
    let back = network_from_export(&packed).map_err(|e| e.to_string())?;
    let (a, b) = (predict(&net, &test).unwrap(), predict(&back, &test).unwrap());
    let same = a.iter().zip(&b).filter(|(x, y)| x == y).count();
    let ratio = packed.len() as f64 / float.len() as f64;
    check(
        ratio <= 1.0 / 25.0 && same == a.len() && a.len() == 1000,
        format!("packed {} B / float {} B = 1/{:.1}; {same}/{} argmax agree", packed.len(), float.len(), 1.0 / ratio, a.len()),
    )
}

// ---------------------------------------------------------------- 11

fn ensemble_run(dir: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_benn"))
        .args(["ensemble", "train", "--strategy", "boost", "--k", "3", "--seed", "7", "--toy-n", "1000", "--epochs", "2"])
        .arg("--out")
        .arg(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    Ok(())
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "run_manifest.json" {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion_11() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ensemble_run(&a)?;
    ensemble_run(&b)?;
    let (fa, fb) = (files(&a), files(&b));
    let ckpts = fa.iter().filter(|(n, _)| n.ends_with(".ckpt")).count();
    check(
        fa == fb && ckpts > 0 && fa.iter().any(|(n, _)| n == "metrics.csv"),
        format!("{} files ({ckpts} checkpoints) byte-identical across two runs", fa.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("kernel exactness", criterion_1),
        ("B/R table", criterion_2),
        ("theorem 1 Monte Carlo", criterion_3),
        ("theorem 2 bounds", criterion_4),
        ("STE correctness", criterion_5),
        ("ensemble direction", criterion_6),
        ("stability direction", criterion_7),
        ("robustness direction", criterion_8),
        ("bootstrap coverage", criterion_9),
        ("export size", criterion_10),
        ("determinism", criterion_11),
    ];
    let only: Vec<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        match run() {
            Ok(detail) => println!("criterion {n:>2} PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
