//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run a subset by number: `cargo test --test acceptance -- 2 5`.

#[path = "../../metrics/tests/common/oracle.rs"]
mod oracle;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use dsam_core::autograd::{Graph, Var};
use dsam_core::data::{preprocess, synth_dataset};
use dsam_core::fm::{guided_filter, Fm, FmConfig, FmInputs};
use dsam_core::harness::ablation::{ablate_with_checkpoints, AblationGrid, AblationTable, RATIOS};
use dsam_core::harness::{evaluate, evaluate_source, report, train, Checkpoint, RunConfig};
use dsam_core::kernels::{haar_analysis, haar_synthesis};
use dsam_core::loss::{dice_ce_loss, fuse_predictions, total_loss, LossWeights};
use dsam_core::metrics::{evaluate_sample, Plane};
use dsam_core::params::{ParamBuilder, ParamGroup, ParamStore};
use dsam_core::pdm::{cwd_loss, Bcm, Pfm};
use dsam_core::{Dsam, Exec, Tensor, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)*) => {
        if !$cond {
            return Err(format!($($arg)*));
        }
    };
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

// ------------------------------------------------------------ 1. metrics

fn random_pair(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let fg = rng.random_range(0.1..0.7);
    let pred = (0..n).map(|_| rng.random::<f64>()).collect();
    let gt = (0..n).map(|_| if rng.random::<f64>() < fg { 1.0 } else { 0.0 }).collect();
    (pred, gt)
}

fn metric_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let side = if i < 100 { 8 } else { 16 };
        let (pred, gt) = random_pair(&mut rng, side * side);
        let r = evaluate_sample(Plane::new(&pred, side, side).unwrap(), Plane::new(&gt, side, side).unwrap())
            .map_err(|e| e.to_string())?;
        let o = oracle::reference(&pred, &gt, side, side);
        let pairs = [
            ("S", r.s_alpha, o.s),
            ("F_w", r.f_beta_w, o.f_w),
            ("F_m", r.f_beta_m, o.f_m),
            ("F_mx", r.f_beta_mx, o.f_mx),
            ("E_m", r.e_phi_m, o.e_m),
            ("E_x", r.e_phi_x, o.e_x),
            ("MAE", r.mae, o.mae),
        ];
        for (name, got, want) in pairs {
            let d = (got - want).abs();
            ensure!(d <= 1e-9, "pair {i} ({side}x{side}) {name}: {got} vs oracle {want}");
            worst = worst.max(d);
        }
        let r = evaluate_sample(Plane::new(&gt, side, side).unwrap(), Plane::new(&gt, side, side).unwrap())
            .map_err(|e| e.to_string())?;
        for (name, v) in
            [("S", r.s_alpha), ("F_w", r.f_beta_w), ("F_m", r.f_beta_m), ("F_mx", r.f_beta_mx), ("E_m", r.e_phi_m), ("E_x", r.e_phi_x)]
        {
            ensure!(v == 1.0, "pair {i}: pred=gt gives {name} = {v}");
        }
        ensure!(r.mae == 0.0, "pair {i}: pred=gt gives MAE = {}", r.mae);
    }
    let el = t.elapsed();
    ensure!(el < Duration::from_secs(60), "took {el:?}");
    Ok(format!("200 pairs, max |lib - oracle| = {worst:.1e}, identities exact"))
}

// ------------------------------------------------------------ 2. distillation

fn cwd(t: &Tensor, s: &Tensor, temp: f64) -> f64 {
    let store = ParamStore::default();
    let mut g = Graph::new(&store);
    let (t, s) = (g.input(t.clone()), g.input(s.clone()));
    let l = cwd_loss(&mut g, t, s, temp).unwrap();
    g.value(l).item()
}

fn distillation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_shift: f64 = 0.0;
    for i in 0..100 {
        let (c, h, w) = (rng.random_range(1..5), rng.random_range(2..7), rng.random_range(2..7));
        let temp = rng.random_range(0.5..8.0);
        let x = random(&mut rng, &[c, h, w]).map(|v| 3.0 * v);
        let y = random(&mut rng, &[c, h, w]).map(|v| 3.0 * v);
        ensure!(cwd(&x, &x, temp) == 0.0, "tensor {i}: cwd(x, x) = {}", cwd(&x, &x, temp));
        let shifts: Vec<f64> = (0..c).map(|_| rng.random_range(-5.0..5.0)).collect();
        let shifted = Tensor::from_fn(&[c, h, w], |j| y.data()[j] + shifts[j / (h * w)]);
        let (base, moved) = (cwd(&x, &y, temp), cwd(&x, &shifted, temp));
        worst_shift = worst_shift.max((base - moved).abs());
        ensure!((base - moved).abs() <= 1e-10, "tensor {i}: shift changes loss {base} -> {moved}");
        ensure!(base >= 0.0, "tensor {i}: negative loss {base}");
        let teacher_shifted = Tensor::from_fn(&[c, h, w], |j| x.data()[j] + shifts[j / (h * w)]);
        ensure!((cwd(&teacher_shifted, &y, temp) - base).abs() <= 1e-10, "tensor {i}: teacher shift changes loss");
    }
    // softmax([0, ln 3]) = (1/4, 3/4) against uniform, T = 1
    let t = Tensor::new(vec![1, 1, 2], vec![0.0, 3f64.ln()]).unwrap();
    let s = Tensor::zeros(&[1, 1, 2]);
    let pinned = 0.25 * (0.25f64 / 0.5).ln() + 0.75 * (0.75f64 / 0.5).ln();
    let got = cwd(&t, &s, 1.0);
    ensure!((got - pinned).abs() <= 1e-10, "two-point KL {got} vs {pinned}");
    // T scales logits by 1/T and the loss by T²
    let t2 = Tensor::new(vec![1, 1, 2], vec![0.0, 2.0 * 3f64.ln()]).unwrap();
    let got2 = cwd(&t2, &s, 2.0);
    ensure!((got2 - 4.0 * pinned).abs() <= 1e-10, "two-point KL at T=2: {got2} vs {}", 4.0 * pinned);
    Ok(format!("100 tensors; max shift drift {worst_shift:.1e}; pinned KL {got:.15}"))
}

// ------------------------------------------------------------ 3. wavelet

fn wavelet() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut parseval, mut recon): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        let x: Vec<f64> = (0..2 * 64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bands = haar_analysis(&x, 2, 8, 8);
        let e_in: f64 = x.iter().map(|v| v * v).sum();
        let e_out: f64 = bands.iter().map(|v| v * v).sum();
        parseval = parseval.max((e_in - e_out).abs());
        let back = haar_synthesis(&bands, 2, 8, 8);
        recon = recon.max(back.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    ensure!(parseval <= 1e-6, "Parseval error {parseval}");
    ensure!(recon <= 1e-6, "reconstruction error {recon}");
    let constant = vec![0.3; 64];
    let bands = haar_analysis(&constant, 1, 8, 8);
    ensure!(bands[16..].iter().all(|&v| v == 0.0), "constant input has non-zero detail");
    let block = haar_analysis(&[1.0, 2.0, 3.0, 4.0], 1, 2, 2);
    ensure!(block == [5.0, -2.0, -1.0, 0.0], "block (1,2,3,4) gives {block:?}");
    Ok(format!("Parseval {parseval:.1e}, reconstruction {recon:.1e}, pinned block exact"))
}

// ------------------------------------------------------------ 4. guided filter

fn gf(x: &Tensor, r: usize, eps: f64) -> Tensor {
    let store = ParamStore::default();
    let mut g = Graph::new(&store);
    let v = g.input(x.clone());
    let y = guided_filter(&mut g, v, r, eps).unwrap();
    g.value(y).clone()
}

/// Window-by-window transcription over clipped windows.
fn gf_brute(x: &[f64], h: usize, w: usize, r: usize, eps: f64) -> Vec<f64> {
    let window = |i: usize, j: usize| {
        let mut cells = Vec::new();
        for y in i.saturating_sub(r)..=(i + r).min(h - 1) {
            for x in j.saturating_sub(r)..=(j + r).min(w - 1) {
                cells.push(y * w + x);
            }
        }
        cells
    };
    let mut a = vec![0.0; h * w];
    let mut b = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let cells = window(i, j);
            let n = cells.len() as f64;
            let mean = cells.iter().map(|&k| x[k]).sum::<f64>() / n;
            let var = cells.iter().map(|&k| (x[k] - mean).powi(2)).sum::<f64>() / n;
            a[i * w + j] = var / (var + eps);
            b[i * w + j] = mean - a[i * w + j] * mean;
        }
    }
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let cells = window(i, j);
            let n = cells.len() as f64;
            let ma = cells.iter().map(|&k| a[k]).sum::<f64>() / n;
            let mb = cells.iter().map(|&k| b[k]).sum::<f64>() / n;
            out[i * w + j] = ma * x[i * w + j] + mb;
        }
    }
    out
}

fn guided() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = random(&mut rng, &[3, 8, 8]);
    let ident = gf(&x, 1, 1e-12).max_abs_diff(&x);
    ensure!(ident <= 1e-5, "eps -> 0 identity error {ident}");
    for c in [0.37, -1.3, 1.0 / 3.0, 12.5] {
        let k = Tensor::full(&[2, 6, 6], c);
        ensure!(gf(&k, 2, 1e-2) == k, "constant {c} not preserved exactly");
    }
    let mut worst: f64 = 0.0;
    for (r, eps) in [(1, 1e-2), (1, 0.5), (1, 1e-4)] {
        for _ in 0..5 {
            let x = random(&mut rng, &[1, 4, 4]);
            let want = gf_brute(x.data(), 4, 4, r, eps);
            let got = gf(&x, r, eps);
            worst = worst.max(got.data().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
    }
    ensure!(worst <= 1e-6, "brute-force disagreement {worst}");
    Ok(format!("identity {ident:.1e}, constants exact, 4x4 oracle {worst:.1e}"))
}

// ------------------------------------------------------------ 5. gradients

const FD_STEP: f64 = 1e-4;
const FD_TOL: f64 = 1e-3;

fn rel_err(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        0.0
    } else {
        d / a.abs().max(b.abs())
    }
}

/// Central differences on `n` random scalar entries of the parameters whose
/// names start with one of `prefixes`.
fn fd_params(store: &mut ParamStore, prefixes: &[&str], n: usize, seed: u64, loss: &dyn Fn(&mut Graph) -> Var) -> Result<f64, String> {
    let grads = {
        let mut g = Graph::new(store);
        let l = loss(&mut g);
        g.backward(l).into_params()
    };
    let entries: Vec<(usize, usize)> = store
        .iter()
        .filter(|(_, p)| prefixes.iter().any(|pre| p.name().starts_with(pre)))
        .flat_map(|(id, p)| (0..p.value().len()).map(move |i| (id, i)))
        .collect();
    ensure!(!entries.is_empty(), "no parameters match {prefixes:?}");
    let eval = |store: &ParamStore| {
        let mut g = Graph::new(store);
        let l = loss(&mut g);
        g.value(l).item()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let (id, i) = entries[rng.random_range(0..entries.len())];
        let orig = store.get(id).value().data()[i];
        store.value_mut(id).data_mut()[i] = orig + FD_STEP;
        let up = eval(store);
        store.value_mut(id).data_mut()[i] = orig - FD_STEP;
        let down = eval(store);
        store.value_mut(id).data_mut()[i] = orig;
        let fd = (up - down) / (2.0 * FD_STEP);
        let an = grads.get(&id).map_or(0.0, |t| t.data()[i]);
        let e = rel_err(an, fd);
        ensure!(e <= FD_TOL, "`{}`[{i}]: autodiff {an} vs fd {fd} (rel {e:.2e})", store.get(id).name());
        worst = worst.max(e);
    }
    Ok(worst)
}

/// Central differences on `n` random entries of an input tensor.
fn fd_input(store: &ParamStore, x: &Tensor, n: usize, seed: u64, loss: &dyn Fn(&mut Graph, Var) -> Var) -> Result<f64, String> {
    let grad = {
        let mut g = Graph::new(store);
        let v = g.variable(x.clone());
        let l = loss(&mut g, v);
        g.backward(l).wrt(v).cloned().unwrap_or_else(|| Tensor::zeros(x.shape()))
    };
    let eval = |t: Tensor| {
        let mut g = Graph::new(store);
        let v = g.variable(t);
        let l = loss(&mut g, v);
        g.value(l).item()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let i = rng.random_range(0..x.len());
        let mut up = x.clone();
        up.data_mut()[i] += FD_STEP;
        let mut down = x.clone();
        down.data_mut()[i] -= FD_STEP;
        let fd = (eval(up) - eval(down)) / (2.0 * FD_STEP);
        let e = rel_err(grad.data()[i], fd);
        ensure!(e <= FD_TOL, "entry {i}: autodiff {} vs fd {fd} (rel {e:.2e})", grad.data()[i]);
        worst = worst.max(e);
    }
    Ok(worst)
}

/// `Σ out ⊙ w` with fixed random weights, so no entry's gradient cancels by symmetry.
fn probe(g: &mut Graph, out: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random(&mut rng, g.shape(out));
    let w = g.input(w);
    let p = g.mul(out, w);
    g.sum(p)
}

fn gradients() -> Outcome {
    const N: usize = 24;
    let (e, s) = (8, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut report = Vec::new();

    // bias-correction block
    let mut store = ParamStore::default();
    let bcm = Bcm::new(&mut ParamBuilder::new(&mut store, 1), "bcm", ParamGroup::Pdm, e, e, e);
    let x = random(&mut rng, &[e, 2 * s, 2 * s]);
    let worst = fd_params(&mut store, &["bcm."], N, 1, &|g| {
        let xv = g.input(x.clone());
        let out = bcm.forward(g, xv, s).unwrap();
        probe(g, out, 100)
    })
    .map_err(|m| format!("BCM {m}"))?;
    report.push(format!("BCM {worst:.1e}"));

    // prompt fusion
    let mut store = ParamStore::default();
    let pfm = Pfm::new(&mut ParamBuilder::new(&mut store, 2), e);
    let (tokens, hf) = (random(&mut rng, &[2, e]), random(&mut rng, &[e, s, s]));
    let worst = fd_params(&mut store, &["pdm.pfm."], N, 2, &|g| {
        let (t, h) = (g.input(tokens.clone()), g.input(hf.clone()));
        let out = pfm.forward(g, t, h).unwrap();
        probe(g, out, 101)
    })
    .map_err(|m| format!("PFM {m}"))?;
    report.push(format!("PFM {worst:.1e}"));

    // finer module, both streams (distinct inputs) and the joint head
    let mut store = ParamStore::default();
    let fm = Fm::new(&mut ParamBuilder::new(&mut store, 3), FmConfig { embed: e, k: 4, gf_radius: 1, gf_eps: 1e-2, n_agents: 4 });
    let (s1, s2, pred) = (random(&mut rng, &[e, s, s]), random(&mut rng, &[e, s, s]), random(&mut rng, &[1, 4 * s, 4 * s]));
    let fm_loss = |g: &mut Graph| {
        let (a, b, p) = (g.input(s1.clone()), g.input(s2.clone()), g.input(pred.clone()));
        let out = fm.forward(g, a, b, p, 4 * s).unwrap();
        probe(g, out, 102)
    };
    let w1 = fd_params(&mut store, &["fm.bc1."], N, 3, &fm_loss).map_err(|m| format!("FM guided stream {m}"))?;
    let w2 = fd_params(&mut store, &["fm.bc2.", "fm.agent."], N, 4, &fm_loss).map_err(|m| format!("FM agent stream {m}"))?;
    let wj = fd_params(&mut store, &["fm.jm."], N, 5, &fm_loss).map_err(|m| format!("FM joint {m}"))?;
    let wi1 = fd_input(&store, &s1, N, 6, &|g, v| {
        let (b, p) = (g.input(s2.clone()), g.input(pred.clone()));
        let out = fm.forward(g, v, b, p, 4 * s).unwrap();
        probe(g, out, 102)
    })
    .map_err(|m| format!("FM stream-1 input {m}"))?;
    let wi2 = fd_input(&store, &s2, N, 7, &|g, v| {
        let (a, p) = (g.input(s1.clone()), g.input(pred.clone()));
        let out = fm.forward(g, a, v, p, 4 * s).unwrap();
        probe(g, out, 102)
    })
    .map_err(|m| format!("FM stream-2 input {m}"))?;
    report.push(format!("FM params {:.1e}/{:.1e}/{:.1e}, inputs {:.1e}/{:.1e}", w1, w2, wj, wi1, wi2));

    // dice + cross-entropy on logits
    let logits = random(&mut rng, &[1, 16, 16]).map(|v| 3.0 * v);
    let gt = Tensor::from_fn(&[1, 16, 16], |_| rng.random_bool(0.4) as u8 as f64);
    let worst = fd_input(&ParamStore::default(), &logits, N, 8, &|g, v| dice_ce_loss(g, v, &gt, &LossWeights::default()).unwrap())
        .map_err(|m| format!("DiceCE {m}"))?;
    report.push(format!("DiceCE {worst:.1e}"));

    // distillation, w.r.t. the student
    let teacher = random(&mut rng, &[4, 6, 6]).map(|v| 2.0 * v);
    let student = random(&mut rng, &[4, 6, 6]).map(|v| 2.0 * v);
    let worst = fd_input(&ParamStore::default(), &student, N, 9, &|g, v| {
        let t = g.input(teacher.clone());
        cwd_loss(g, t, v, 4.0).unwrap()
    })
    .map_err(|m| format!("cwd {m}"))?;
    report.push(format!("cwd {worst:.1e}"));
    Ok(format!("{N} entries each, max rel err: {}", report.join(", ")))
}

// ------------------------------------------------------------ 6. boundaries

fn boundaries() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let store = ParamStore::default();
    let mut g = Graph::new(&store);
    let fm = g.input(random(&mut rng, &[1, 8, 8]));
    let sam = g.input(random(&mut rng, &[1, 8, 8]));
    let f0 = fuse_predictions(&mut g, fm, sam, 0.0).unwrap();
    let f1 = fuse_predictions(&mut g, fm, sam, 1.0).unwrap();
    ensure!(g.value(f0) == g.value(fm), "alpha = 0 is not Pred_FM");
    ensure!(g.value(f1) == g.value(sam), "alpha = 1 is not Pred_SAM");
    let ls = g.input(Tensor::scalar(rng.random_range(0.1..3.0)));
    let lk = g.input(Tensor::scalar(rng.random_range(0.1..3.0)));
    let b1 = total_loss(&mut g, ls, Some(lk), 1.0).unwrap();
    let b0 = total_loss(&mut g, ls, Some(lk), 0.0).unwrap();
    ensure!(g.value(b1) == g.value(ls), "beta = 1 is not Loss_SAM");
    ensure!(g.value(b0) == g.value(lk), "beta = 0 is not Loss_KD");
    let d = LossWeights::default();
    let c = RunConfig::default();
    ensure!((d.alpha, d.beta, c.alpha, c.beta) == (0.9, 0.9, 0.9, 0.9), "defaults are not 1:9");
    ensure!(RATIOS.iter().any(|&(l, v)| l == "1:9" && v == c.alpha), "1:9 ratio row does not match the default");
    Ok("alpha/beta in {0,1} reduce exactly; defaults alpha = beta = 0.9 (1:9)".into())
}

// ------------------------------------------------------------ 7. frozen split

fn frozen_split() -> Outcome {
    let cfg = RunConfig { epochs: 50, ..RunConfig::desk() };
    let steps = cfg.epochs * 8usize.div_ceil(cfg.batch_size);
    let (init, _) = Dsam::build(cfg.model_config(), cfg.seed).map_err(|e| e.to_string())?;
    let out = train(&cfg).map_err(|e| e.to_string())?;
    let (mut trained, _) = Dsam::build(cfg.model_config(), cfg.seed).map_err(|e| e.to_string())?;
    out.checkpoint.restore(&mut trained).map_err(|e| e.to_string())?;
    for group in ParamGroup::ALL {
        let same = init.group_hash(group) == trained.group_hash(group);
        ensure!(same == group.frozen(), "{group:?}: hash {} after training", if same { "unchanged" } else { "changed" });
    }
    Ok(format!("{steps} steps: Teacher/PromptEncoder unchanged; Student/Pdm/Decoder/Fm changed"))
}

// ------------------------------------------------------------ 8. overfit

fn overfit() -> Outcome {
    let t = Instant::now();
    let baseline: serde_json::Value = serde_json::from_str(include_str!("data/overfit_baseline.json")).unwrap();
    let tol = baseline["tolerance"].as_f64().unwrap();
    let mut lines = Vec::new();
    for run in baseline["runs"].as_array().unwrap() {
        let seed = run["seed"].as_u64().unwrap();
        let cfg = RunConfig { seed, ..RunConfig::desk() };
        ensure!(cfg.epochs * 8usize.div_ceil(cfg.batch_size) == 200, "desk profile is not 200 steps");
        let out = train(&cfg).map_err(|e| e.to_string())?;
        let (first, last) = (out.log[0].loss, out.log.last().unwrap().loss);
        ensure!(last < first, "seed {seed}: final loss {last} not below initial {first}");
        let r = evaluate_source(&out.checkpoint, &cfg.train_data).map_err(|e| e.to_string())?.report;
        ensure!(r.mae < 0.10, "seed {seed}: MAE {}", r.mae);
        ensure!(r.s_alpha > 0.85, "seed {seed}: S {}", r.s_alpha);
        let (bs, bm) = (run["s_alpha"].as_f64().unwrap(), run["mae"].as_f64().unwrap());
        ensure!((r.s_alpha - bs).abs() <= tol, "seed {seed}: S {} drifted from baseline {bs}", r.s_alpha);
        ensure!((r.mae - bm).abs() <= tol, "seed {seed}: MAE {} drifted from baseline {bm}", r.mae);
        lines.push(format!("seed {seed}: S {:.3} MAE {:.4}", r.s_alpha, r.mae));
    }
    let el = t.elapsed();
    ensure!(el < Duration::from_secs(600), "took {el:?}");
    Ok(lines.join("; "))
}

// ------------------------------------------------------------ 9. ablation

fn ablation() -> Outcome {
    let base = RunConfig::desk();
    let (table, ckpts) = ablate_with_checkpoints(AblationGrid::Modules, &base).map_err(|e| e.to_string())?;
    let labels: Vec<&str> = table.rows.iter().map(|r| r.label.as_str()).collect();
    ensure!(labels == ["M1", "M2", "M3", "M4"], "rows {labels:?}");

    let m4: &Checkpoint = &ckpts[3];
    let raw = base.train_data.load(dsam_core::data::Split::Test, base.image_size).map_err(|e| e.to_string())?;
    let fused = evaluate(&m4.with_config(RunConfig { alpha: 1.0, ..m4.config.clone() }), &raw).map_err(|e| e.to_string())?;
    let m2 = evaluate(&m4.with_config(RunConfig { variant: Variant::M2, ..m4.config.clone() }), &raw).map_err(|e| e.to_string())?;
    ensure!(fused.logits == m2.logits, "M4 at alpha = 1 differs from M2 on the same checkpoint");
    ensure!(fused.report == m2.report, "reports differ");

    for (_, mut c) in AblationGrid::Layers.rows(&base) {
        c.k = base.k;
        ensure!(serde_json::to_vec(&c).unwrap() == serde_json::to_vec(&base).unwrap(), "layer rows differ beyond k");
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    report::write_table(dir.path(), "modules", &table).map_err(|e| e.to_string())?;
    let mut rd = csv::Reader::from_path(dir.path().join("modules.csv")).map_err(|e| e.to_string())?;
    let header: Vec<String> = rd.headers().map_err(|e| e.to_string())?.iter().map(String::from).collect();
    ensure!(header == ["variant", "train:S", "train:F_w", "train:F_m", "train:E_m", "train:E_x", "train:MAE"], "csv header {header:?}");
    let rows = rd.records().collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    ensure!(rows.len() == 4, "csv has {} rows", rows.len());
    for r in &rows {
        ensure!(r.iter().skip(1).all(|v| v.parse::<f64>().is_ok()), "non-numeric csv row {r:?}");
    }
    let json: AblationTable =
        serde_json::from_slice(&std::fs::read(dir.path().join("modules.json")).unwrap()).map_err(|e| e.to_string())?;
    ensure!(json.rows.len() == 4 && json.datasets == ["train"], "json table malformed");
    let s: Vec<String> = table.rows.iter().map(|r| format!("{} {:.3}", r.label, r.reports[0].s_alpha)).collect();
    Ok(format!("grid complete (S: {}); M4@alpha=1 == M2 bitwise; reports parse", s.join(", ")))
}

// ------------------------------------------------------------ 10. determinism

struct Artefacts {
    log: Vec<u8>,
    manifest: Vec<u8>,
    blob: Vec<u8>,
    eval_json: Vec<u8>,
    eval_csv: Vec<u8>,
}

fn artefacts(cfg: &RunConfig) -> Result<Artefacts, String> {
    let out = train(cfg).map_err(|e| e.to_string())?;
    let ev = evaluate_source(&out.checkpoint, &cfg.train_data).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    out.checkpoint.save(&dir.path().join("model.json")).map_err(|e| e.to_string())?;
    report::write_log(dir.path(), "log", &out.log).map_err(|e| e.to_string())?;
    report::write_evaluation(dir.path(), "eval", &ev).map_err(|e| e.to_string())?;
    let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
    Ok(Artefacts {
        log: [read("log.json"), read("log.csv")].concat(),
        manifest: read("model.json"),
        blob: read("model.json.bin"),
        eval_json: read("eval.json"),
        eval_csv: read("eval.csv"),
    })
}

fn determinism() -> Outcome {
    let mut checked = 0;
    for cfg in [
        RunConfig { epochs: 6, ..RunConfig::desk() },
        RunConfig { epochs: 6, jitter: 0.1, batch_size: 3, seed: 5, fm_inputs: FmInputs::ImageDepth, ..RunConfig::desk() },
    ] {
        let a = artefacts(&cfg)?;
        let b = artefacts(&cfg)?;
        ensure!(a.log == b.log, "logs differ");
        ensure!(a.manifest == b.manifest && a.blob == b.blob, "checkpoints differ");
        ensure!(a.eval_json == b.eval_json && a.eval_csv == b.eval_csv, "reports differ");
        // the executor only changes the recorded config, never the numbers
        let seq = artefacts(&RunConfig { exec: Exec::Sequential, ..cfg.clone() })?;
        ensure!(seq.log == a.log && seq.blob == a.blob && seq.eval_json == a.eval_json, "sequential and parallel runs differ");
        checked += 1;
    }
    let s = synth_dataset(2, 3, 64);
    ensure!(s == synth_dataset(2, 3, 64), "synthetic data is not reproducible");
    ensure!(preprocess(&s[0], 64).unwrap() == preprocess(&s[0], 64).unwrap(), "preprocessing is not reproducible");
    Ok(format!("{checked} configs x 2 runs (+ sequential): logs, checkpoints, reports byte-identical"))
}

thread_local! {
    static PANIC_AT: std::cell::RefCell<String> = const { std::cell::RefCell::new(String::new()) };
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("metric oracle suite", metric_oracle),
        ("distillation properties", distillation),
        ("wavelet properties", wavelet),
        ("guided-filter properties", guided),
        ("differentiability", gradients),
        ("fusion/loss boundaries", boundaries),
        ("frozen-split contract", frozen_split),
        ("desk overfit", overfit),
        ("ablation harness", ablation),
        ("determinism", determinism),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    panic::set_hook(Box::new(|info| {
        let at = info.location().map(|l| format!(" at {}:{}", l.file(), l.line())).unwrap_or_default();
        PANIC_AT.with(|p| *p.borrow_mut() = at);
    }));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panic: {}{}", msg.unwrap_or_default(), PANIC_AT.with(|p| p.borrow().clone())))
        });
        match outcome {
            Ok(detail) => println!("PASS [{n:>2}] {name}: {detail} ({:.1?})", t.elapsed()),
            Err(why) => {
                failed += 1;
                println!("FAIL [{n:>2}] {name}: {why} ({:.1?})", t.elapsed());
            }
        }
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
