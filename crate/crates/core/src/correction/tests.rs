use super::*;
use crate::grid::Grid;
use crate::rng::{normal_grid, stream_rng};

fn small_arch() -> NetArch {
    NetArch {
        channels: vec![3, 4],
        kernel: 3,
        convs_per_block: 2,
        activation: Activation::Silu,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn fresh_net_is_identity() {
    let net = CorrectionNet::new(NetArch::desk(), 3).unwrap();
    let u = normal_grid(&mut stream_rng(1, 0), 8, 12);
    assert_eq!(net.apply(&u).unwrap(), u);
}

#[test]
fn evaluation_is_deterministic() {
    let net = CorrectionNet::random(small_arch(), 5, 0.3).unwrap();
    let u = normal_grid(&mut stream_rng(2, 0), 8, 8);
    assert_eq!(net.apply(&u).unwrap(), net.apply(&u).unwrap());
}

#[test]
fn rejects_indivisible_input() {
    let net = CorrectionNet::new(NetArch::desk(), 0).unwrap();
    assert!(net.apply(&Grid::zeros(6, 8)).is_err());
}

#[test]
fn zero_cotangent_gives_zero_gradients() {
    let net = CorrectionNet::random(small_arch(), 1, 0.3).unwrap();
    let u = normal_grid(&mut stream_rng(1, 1), 8, 8);
    let tape = net.forward(&u).unwrap();
    let mut pg = vec![0.0; net.n_params()];
    let g = net.vjp(&tape, &Grid::zeros(8, 8), Some(&mut pg)).unwrap();
    assert_eq!(g.max_abs(), 0.0);
    assert!(pg.iter().all(|&p| p == 0.0));
}

#[test]
fn input_vjp_matches_finite_differences() {
    for trial in 0..20u64 {
        let net = CorrectionNet::random(small_arch(), trial, 0.3).unwrap();
        let mut rng = stream_rng(100 + trial, 0);
        let u = normal_grid(&mut rng, 8, 8);
        let d = normal_grid(&mut rng, 8, 8);
        let c = normal_grid(&mut rng, 8, 8);
        let h = 1e-5;
        let mut up = u.clone();
        up.axpy(h, &d);
        let mut um = u.clone();
        um.axpy(-h, &d);
        let fd = (net.apply(&up).unwrap().dot(&c) - net.apply(&um).unwrap().dot(&c)) / (2.0 * h);
        let g = net.vjp(&net.forward(&u).unwrap(), &c, None).unwrap();
        assert!(rel(fd, g.dot(&d)) < 1e-4, "trial {trial}: {fd} vs {}", g.dot(&d));
    }
}

#[test]
fn param_gradient_matches_finite_differences() {
    for trial in 0..20u64 {
        let net = CorrectionNet::random(small_arch(), trial, 0.3).unwrap();
        let mut rng = stream_rng(200 + trial, 0);
        let u = normal_grid(&mut rng, 8, 8);
        let c = normal_grid(&mut rng, 8, 8);
        let dir = normal_grid(&mut rng, net.n_params(), 1);
        let mut pg = vec![0.0; net.n_params()];
        net.vjp(&net.forward(&u).unwrap(), &c, Some(&mut pg)).unwrap();
        let h = 1e-5;
        let eval = |s: f64| {
            let p: Vec<f64> = net.params().iter().zip(dir.as_slice()).map(|(p, d)| p + s * d).collect();
            CorrectionNet::from_params(net.arch().clone(), p).unwrap().apply(&u).unwrap().dot(&c)
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        let an: f64 = pg.iter().zip(dir.as_slice()).map(|(a, b)| a * b).sum();
        assert!(rel(fd, an) < 1e-4, "trial {trial}: {fd} vs {an}");
    }
}

#[test]
fn tangent_matches_finite_differences() {
    let net = CorrectionNet::random(small_arch(), 9, 0.3).unwrap();
    let mut rng = stream_rng(300, 0);
    let u = normal_grid(&mut rng, 8, 8);
    let v = normal_grid(&mut rng, 8, 8);
    let tape = net.forward_with_tangent(&u, &v).unwrap();
    let jv = tape.tangent_output().unwrap();
    let h = 1e-5;
    let mut up = u.clone();
    up.axpy(h, &v);
    let mut um = u.clone();
    um.axpy(-h, &v);
    let mut fd = net.apply(&up).unwrap().sub(&net.apply(&um).unwrap());
    fd.scale(1.0 / (2.0 * h));
    assert!(fd.rel_err(&jv) < 1e-6);
    assert_eq!(tape.output(), net.apply(&u).unwrap());
}

#[test]
fn tangent_param_grad_matches_finite_differences() {
    // ∂/∂Θ ⟨r, J(u;Θ) v⟩ against differences of the exact tangent.
    for trial in 0..10u64 {
        let net = CorrectionNet::random(small_arch(), trial, 0.3).unwrap();
        let mut rng = stream_rng(400 + trial, 0);
        let u = normal_grid(&mut rng, 8, 8);
        let v = normal_grid(&mut rng, 8, 8);
        let r = normal_grid(&mut rng, 8, 8);
        let dir = normal_grid(&mut rng, net.n_params(), 1);
        let mut pg = vec![0.0; net.n_params()];
        let tape = net.forward_with_tangent(&u, &v).unwrap();
        net.tangent_param_grad(&tape, &r, &mut pg).unwrap();
        let h = 1e-5;
        let eval = |s: f64| {
            let p: Vec<f64> = net.params().iter().zip(dir.as_slice()).map(|(p, d)| p + s * d).collect();
            let n = CorrectionNet::from_params(net.arch().clone(), p).unwrap();
            n.forward_with_tangent(&u, &v).unwrap().tangent_output().unwrap().dot(&r)
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        let an: f64 = pg.iter().zip(dir.as_slice()).map(|(a, b)| a * b).sum();
        assert!(rel(fd, an) < 1e-4, "trial {trial}: {fd} vs {an}");
    }
}

#[test]
fn linear_net_vjp_is_conv_transpose() {
    // One 3×3 convolution, identity activation, then the 1×1 output layer:
    // net(u) = u + w·(K ⋆ u + b₁) + b₂, so the VJP is c + w·Kᵀc.
    let arch = NetArch {
        channels: vec![1],
        kernel: 3,
        convs_per_block: 1,
        activation: Activation::Identity,
    };
    let net = CorrectionNet::random(arch, 4, 0.5).unwrap();
    let p = net.params();
    let (kern, w) = (&p[0..9], p[10]);
    let n = 8;
    let mut dense = vec![0.0; n * n * n * n];
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            dense[row * n * n + row] += 1.0;
            for ky in 0..3 {
                for kx in 0..3 {
                    let (si, sj) = (i as isize + ky as isize - 1, j as isize + kx as isize - 1);
                    if (0..n as isize).contains(&si) && (0..n as isize).contains(&sj) {
                        let colm = si as usize * n + sj as usize;
                        dense[row * n * n + colm] += w * kern[ky * 3 + kx];
                    }
                }
            }
        }
    }
    let u = normal_grid(&mut stream_rng(7, 0), n, n);
    let c = normal_grid(&mut stream_rng(8, 0), n, n);
    let g = net.vjp(&net.forward(&u).unwrap(), &c, None).unwrap();
    for col in 0..n * n {
        let want: f64 = (0..n * n).map(|r| dense[r * n * n + col] * c.as_slice()[r]).sum();
        assert!((want - g.as_slice()[col]).abs() < 1e-12);
    }
}

mod training {
    use super::super::*;
    use crate::error::Error;
    use crate::grid::{Image, Measurement};
    use crate::operators::{LinearOp, ToyOps};
    use crate::rng::{stream_rng, uniform_grid};
    use crate::solver::initial_iterate;
    use alloc::sync::Arc;

    fn data(toy: &ToyOps, n: usize) -> (Vec<Image>, Vec<Measurement>) {
        let xs: Vec<Image> = (0..n)
            .map(|s| uniform_grid(&mut stream_rng(s as u64, 9), 8, 8, 0.0, 1.0))
            .collect();
        let ys = xs.iter().map(|x| toy.a.apply(x).unwrap()).collect();
        (xs, ys)
    }

    fn arch() -> NetArch {
        NetArch {
            channels: vec![4, 4],
            kernel: 3,
            convs_per_block: 1,
            activation: Activation::Silu,
        }
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            lr: 1e-3,
            batch_size: 2,
            epochs: 1,
            ..TrainConfig::default()
        }
    }

    fn mean_loss(ops: OperatorPair<'_>, f: &CorrectionNet, g: Option<&CorrectionNet>, ys: &[Measurement]) -> f64 {
        let mut total = 0.0;
        for y in ys {
            let x = initial_iterate(ops.atilde, y, true).unwrap();
            let mut gf = vec![0.0; f.n_params()];
            let l = match g {
                Some(g) => {
                    let mut gg = vec![0.0; g.n_params()];
                    forward_adjoint_loss(ops, f, g, &x, y, &mut gf, &mut gg).unwrap()
                }
                None => forward_only_loss(ops, f, &x, y, &mut gf).unwrap(),
            };
            total += l.forward + l.adjoint;
        }
        total / ys.len() as f64
    }

    fn none(_: &EpochStats, _: &CorrectionNet, _: Option<&CorrectionNet>) -> crate::Result<()> {
        Ok(())
    }

    #[test]
    fn ramp_schedule() {
        let c = TrainConfig {
            n_max: 10,
            epochs: 10,
            ..TrainConfig::default()
        };
        let ramp: Vec<_> = (0..10).map(|e| c.n_iter(e)).collect();
        assert_eq!(ramp, (1..=10).collect::<Vec<_>>());
        let c = TrainConfig {
            n_max: 4,
            epochs: 7,
            ..TrainConfig::default()
        };
        let ramp: Vec<_> = (0..7).map(|e| c.n_iter(e)).collect();
        assert!(ramp.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!((ramp[0], *ramp.last().unwrap()), (1, 4));
        let c = TrainConfig::default();
        assert!((0..c.epochs).all(|e| c.n_iter(e) == 1));
        let lrs: Vec<_> = (0..9).map(|e| TrainConfig { epochs: 9, ..c.clone() }.learning_rate(e)).collect();
        assert_eq!(lrs[0], 1e-4);
        assert_eq!(lrs[8], 2.5e-5);
    }

    #[test]
    fn one_epoch_reduces_the_loss() {
        let toy = ToyOps::for_image(8).unwrap();
        let ops = OperatorPair {
            a: &toy.a,
            atilde: &toy.atilde,
        };
        let (_, ys) = data(&toy, 8);
        let f = CorrectionNet::new(arch(), 1).unwrap();
        let g = CorrectionNet::new(arch(), 2).unwrap();
        let before = mean_loss(ops, &f, Some(&g), &ys);
        let out = train_forward_adjoint(&ys, ops, f, g, &cfg(), &mut none).unwrap();
        let after = mean_loss(ops, &out.f, out.g.as_ref(), &ys);
        assert!(after < before, "{after} !< {before}");

        let f = CorrectionNet::new(arch(), 1).unwrap();
        let before = mean_loss(ops, &f, None, &ys);
        let out = train_forward_only(&ys, ops, f, &cfg(), &mut none).unwrap();
        let after = mean_loss(ops, &out.f, None, &ys);
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn identical_operators_stay_at_the_floor() {
        let toy = ToyOps::for_image(8).unwrap();
        let ops = OperatorPair {
            a: &toy.a,
            atilde: &toy.a,
        };
        let (_, ys) = data(&toy, 4);
        let f = CorrectionNet::new(arch(), 1).unwrap();
        let g = CorrectionNet::new(arch(), 2).unwrap();
        let out = train_forward_adjoint(&ys, ops, f.clone(), g.clone(), &cfg(), &mut none).unwrap();
        assert_eq!(out.f, f);
        assert_eq!(out.g.as_ref(), Some(&g));
        assert_eq!(out.history[0].forward_loss, 0.0);
        assert_eq!(out.history[0].adjoint_loss, 0.0);
        let out = train_forward_only(&ys, ops, f.clone(), &cfg(), &mut none).unwrap();
        assert_eq!(out.f, f);
    }

    #[test]
    fn single_depth_recursion_is_plain_training() {
        let toy = ToyOps::for_image(8).unwrap();
        let ops = OperatorPair {
            a: &toy.a,
            atilde: &toy.atilde,
        };
        let (_, ys) = data(&toy, 4);
        let f = CorrectionNet::new(arch(), 1).unwrap();
        let g = CorrectionNet::new(arch(), 2).unwrap();
        let c = TrainConfig { epochs: 2, ..cfg() };
        let a = train_forward_adjoint(&ys, ops, f.clone(), g.clone(), &c, &mut none).unwrap();
        let b = train_recursive(&ys, ops, f, Some(g), &c, &mut none).unwrap();
        assert_eq!(a.f, b.f);
        assert_eq!(a.g, b.g);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn recursion_respects_the_ramp() {
        let toy = ToyOps::for_image(8).unwrap();
        let ops = OperatorPair {
            a: &toy.a,
            atilde: &toy.atilde,
        };
        let (_, ys) = data(&toy, 2);
        let c = TrainConfig {
            epochs: 3,
            n_max: 3,
            ..cfg()
        };
        let mut seen = Vec::new();
        let mut hook = |s: &EpochStats, _: &CorrectionNet, _: Option<&CorrectionNet>| {
            seen.push(s.n_iter);
            Ok(())
        };
        let out = train_recursive(&ys, ops, CorrectionNet::new(arch(), 1).unwrap(), None, &c, &mut hook).unwrap();
        assert_eq!(seen, vec![1, 2, 3]);
        for s in &out.history {
            assert!(s.max_unrolled <= c.n_iter(s.epoch));
            assert_eq!(s.max_unrolled, s.n_iter);
        }
    }

    #[test]
    fn non_finite_data_aborts() {
        let toy = ToyOps::for_image(8).unwrap();
        let ops = OperatorPair {
            a: &toy.a,
            atilde: &toy.atilde,
        };
        let (_, mut ys) = data(&toy, 2);
        ys[1].as_mut_slice()[3] = f64::NAN;
        let c = TrainConfig {
            positivity: false,
            ..cfg()
        };
        let err = train_forward_only(&ys, ops, CorrectionNet::new(arch(), 1).unwrap(), &c, &mut none).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }), "{err:?}");
    }

    #[test]
    fn forward_only_gradient_matches_finite_differences() {
        // Parameter gradient of ‖F(Ãx) − Ax‖² + ‖A*r₀ − Ã*J(Θ)ᵀr₀‖² with r₀ frozen.
        let toy = ToyOps::for_image(8).unwrap();
        let ops = OperatorPair {
            a: &toy.a,
            atilde: &toy.atilde,
        };
        let (xs, ys) = data(&toy, 1);
        let f = CorrectionNet::random(arch(), 3, 0.3).unwrap();
        let x = &xs[0];
        let y = &ys[0];
        let u = toy.atilde.apply(x).unwrap();
        let r0 = f.apply(&u).unwrap().sub(y);
        let loss = |net: &CorrectionNet| {
            let tape = net.forward(&u).unwrap();
            let d = tape.output().sub(&toy.a.apply(x).unwrap());
            let jr = net.vjp(&tape, &r0, None).unwrap();
            let e = toy.a.adjoint(&r0).unwrap().sub(&toy.atilde.adjoint(&jr).unwrap());
            d.norm_sq() + e.norm_sq()
        };
        let mut grad = vec![0.0; f.n_params()];
        let l = forward_only_loss(ops, &f, x, y, &mut grad).unwrap();
        assert!((l.forward + l.adjoint - loss(&f)).abs() < 1e-10 * loss(&f));
        for k in 0..5u64 {
            let dir = crate::rng::normal_grid(&mut stream_rng(k, 77), f.n_params(), 1);
            let h = 1e-5;
            let shifted = |s: f64| {
                let p = f.params().iter().zip(dir.as_slice()).map(|(p, d)| p + s * d).collect();
                CorrectionNet::from_params(f.arch().clone(), p).unwrap()
            };
            let fd = (loss(&shifted(h)) - loss(&shifted(-h))) / (2.0 * h);
            let an: f64 = grad.iter().zip(dir.as_slice()).map(|(a, b)| a * b).sum();
            assert!((fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()), "{fd} vs {an}");
        }
    }

    #[test]
    fn forward_only_iterates_stay_in_the_backprojection_range() {
        // Odd image rows form the kernel of the skip sampler; a forward-only
        // gradient is Ã*(…) and can never populate them.
        let toy = ToyOps::for_image(8).unwrap();
        let atilde: Arc<dyn LinearOp> = Arc::new(toy.atilde.clone());
        let (_, ys) = data(&toy, 1);
        let f = CorrectionNet::random(arch(), 11, 0.5).unwrap();
        let co = CorrectedOperator::forward_only(atilde.clone(), f);
        let mut x = atilde.adjoint(&ys[0]).unwrap();
        for _ in 0..50 {
            let g = co.fidelity_gradient(&x, &ys[0]).unwrap();
            x.axpy(-0.2, &g);
            let kernel: f64 = (0..8).filter(|r| r % 2 == 1).flat_map(|r| (0..8).map(move |c| (r, c))).map(|(r, c)| x.get(r, c).powi(2)).sum();
            assert!(kernel.sqrt() <= 1e-8 * x.norm());
        }
    }

    #[test]
    fn untrained_corrections_reduce_to_uncorrected() {
        let toy = ToyOps::for_image(8).unwrap();
        let atilde: Arc<dyn LinearOp> = Arc::new(toy.atilde.clone());
        let (xs, ys) = data(&toy, 1);
        let plain = CorrectedOperator::none(atilde.clone());
        let fo = CorrectedOperator::forward_only(atilde.clone(), CorrectionNet::new(arch(), 1).unwrap());
        let fa = CorrectedOperator::forward_adjoint(
            atilde.clone(),
            CorrectionNet::new(arch(), 1).unwrap(),
            CorrectionNet::new(arch(), 2).unwrap(),
        );
        let want = plain.fidelity_gradient(&xs[0], &ys[0]).unwrap();
        assert_eq!(fo.fidelity_gradient(&xs[0], &ys[0]).unwrap(), want);
        assert_eq!(fa.fidelity_gradient(&xs[0], &ys[0]).unwrap(), want);
        assert_eq!(fo.corrected_forward(&xs[0]).unwrap(), toy.atilde.apply(&xs[0]).unwrap());
        // Zero residual gives a zero gradient for every method.
        let y0 = toy.atilde.apply(&xs[0]).unwrap();
        assert_eq!(fa.fidelity_gradient(&xs[0], &y0).unwrap().max_abs(), 0.0);
        assert_eq!(fo.fidelity_gradient(&xs[0], &y0).unwrap().max_abs(), 0.0);
    }
}
