use std::fs;

use slicer_core::dynfit::{fit_loss, half_life, integrate_loss, DecayCurve, LossParams, LossPreset};
use slicer_core::fieldmap::{crosstalk_distance, transverse_inhomogeneity, TransitionId};
use slicer_core::passage::{clebsch_gordan_ratio, flat_top, linspace, solve_transfer, transfer_profile, Hs1Params};
use slicer_core::protocol::{init_grid, simulate_layer_matching, simulate_layer_scan, SpinSelection};
use slicer_core::specimg::{
    add_noise, compensate, detection_bound, frequency_map, stripe_metrics, synthesize_with, SpectralImage,
    StripeMetrics, WindowProfile,
};

use crate::config::{parse_transition, RunConfig};
use crate::error::CliError;
use crate::output::{num, pgm16, report, svg_plot, Artifacts, Csv};

/// Command-line values that override the configuration.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub plot: bool,
    pub seed: Option<u64>,
    pub transition: Option<String>,
    pub durations: Option<Vec<f64>>,
    pub mode: Option<String>,
    pub preset: Option<String>,
    pub input: Option<String>,
    pub synthesize: Option<(f64, f64)>,
    pub shim: Option<[f64; 2]>,
    pub sweep: bool,
}

pub struct Context<'a> {
    pub config: &'a RunConfig,
    pub args: &'a Overrides,
    pub out: &'a mut Artifacts,
}

impl Context<'_> {
    fn plot(&self) -> bool {
        self.args.plot || self.config.output.plot
    }
}

fn profile_name(t: TransitionId, duration: f64) -> String {
    format!("profile_{}_{:.2}ms", t.name(), duration)
}

pub fn profile(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = ctx.config;
    let t = parse_transition(ctx.args.transition.as_deref().unwrap_or(&cfg.profile.transition))?;
    let durations = ctx.args.durations.clone().unwrap_or_else(|| cfg.profile.durations.clone());
    if durations.is_empty() {
        return Err(CliError::Usage("no pulse durations given".into()));
    }
    if cfg.profile.points < 2 || !(cfg.profile.span > 0.0) {
        return Err(CliError::Usage("profile grid needs span > 0 and at least 2 points".into()));
    }
    let base = cfg.pulse_for(t)?.centered_at(0.0);
    let shift = cfg.protocol()?.context.shift(&cfg.lattice()?, TransitionId::T1);
    let grid = linspace(-cfg.profile.span, cfg.profile.span, cfg.profile.points);

    let mut summary = Csv::new(&[
        "duration_ms",
        "peak",
        "flat_top_lo_khz",
        "flat_top_hi_khz",
        "flat_top_width_khz",
        "p_at_layer_shift",
        "adiabaticity_max",
    ]);
    let mut curves = Vec::new();
    for &d in &durations {
        let p = Hs1Params { duration: d, ..base.clone() };
        p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let pts = transfer_profile(&p, &grid, p.default_step())?;
        let mut csv = Csv::new(&["detuning_khz", "p_transfer", "adiabaticity_max", "norm_error"]);
        for q in &pts {
            csv.row(&[num(q.detuning), num(q.result.p_transfer), num(q.result.adiabaticity_max), num(q.result.norm_error)]);
        }
        let name = profile_name(t, d);
        ctx.out.write(&format!("{name}.csv"), &csv.into_bytes())?;

        let fine = transfer_profile(&p, &linspace(-cfg.profile.span, cfg.profile.span, 20 * cfg.profile.points), p.default_step())?;
        let peak = solve_transfer(&p, 0.0, p.default_step())?;
        let neighbour = solve_transfer(&p, shift, p.default_step())?;
        let (lo, hi) = flat_top(&fine, 0.98).unwrap_or((f64::NAN, f64::NAN));
        summary.row(&[
            num(d),
            num(peak.p_transfer),
            num(lo),
            num(hi),
            num(if lo.is_nan() { 0.0 } else { hi - lo }),
            num(neighbour.p_transfer),
            num(peak.adiabaticity_max),
        ]);
        curves.push((format!("{d:.2} ms"), pts.iter().map(|q| (q.detuning, q.result.p_transfer)).collect::<Vec<_>>()));
    }
    ctx.out.write(&format!("profile_{}_summary.csv", t.name()), &summary.into_bytes())?;
    if ctx.plot() {
        let series: Vec<(&str, Vec<(f64, f64)>)> = curves.iter().map(|(n, c)| (n.as_str(), c.clone())).collect();
        let svg = svg_plot(&format!("Transfer profile, transition {}", t.name()), "detuning (kHz)", "p", &series);
        ctx.out.write(&format!("profile_{}.svg", t.name()), &svg)?;
    }
    Ok(())
}

pub fn scan(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = ctx.config;
    let mode: SpinSelection = match &ctx.args.mode {
        Some(m) => m.parse().map_err(|e: slicer_core::Error| CliError::Usage(e.to_string()))?,
        None => cfg.scan_mode()?,
    };
    let protocol = cfg.protocol()?;
    let geom = cfg.lattice()?;
    let grid = init_grid(&geom, cfg.scan.spin_up_fraction.resolve()?).map_err(|e| CliError::Usage(e.to_string()))?;
    let shift = protocol.context.shift(&geom, TransitionId::T1);
    if cfg.scan.points < 2 || !(cfg.scan.periods > 0.0) {
        return Err(CliError::Usage("scan grid needs periods > 0 and at least 2 points".into()));
    }
    if cfg.scan.periods < 1.0 {
        ctx.out.warn(format!("scan spans {} layer periods; fringes cannot be resolved", cfg.scan.periods));
    }
    let half = 0.5 * cfg.scan.periods * shift;
    let centers = linspace(-half, half, cfg.scan.points);
    let pts = simulate_layer_scan(&protocol, &grid, mode, &centers)?;
    let ratio = match mode {
        SpinSelection::Both => protocol.both_ratio,
        _ => protocol.context.shift(&geom, TransitionId::T2) / shift,
    };
    let mut csv = Csv::new(&["delta1_khz", "delta2_khz", "ratio", "layer", "signal", "focus", "background"]);
    for p in &pts {
        csv.row(&[num(p.delta1), num(p.delta2), num(ratio), p.layer.to_string(), num(p.signal), num(p.focus), num(p.background)]);
    }
    let name = format!("scan_{}", mode.name());
    ctx.out.write(&format!("{name}.csv"), &csv.into_bytes())?;
    if ctx.plot() {
        let data = pts.iter().map(|p| (p.delta1, p.signal)).collect();
        let svg = svg_plot(&format!("Layer scan ({})", mode.name()), "delta1 (kHz)", "signal", &[(mode.name(), data)]);
        ctx.out.write(&format!("{name}.svg"), &svg)?;
    }
    Ok(())
}

pub fn matching(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = ctx.config;
    let m = &cfg.matching;
    let protocol = cfg.protocol()?;
    let geom = cfg.lattice()?;
    let grid = init_grid(&geom, 1.0).map_err(|e| CliError::Usage(e.to_string()))?;
    if m.points < 2 || !(m.span > 0.0) {
        return Err(CliError::Usage("match grid needs span > 0 and at least 2 points".into()));
    }
    let shift3 = protocol.context.shift(&geom, TransitionId::T3);
    if 2.0 * m.span < shift3 {
        ctx.out.warn(format!("match range {:.3} kHz is narrower than one layer spacing ({shift3:.3} kHz)", 2.0 * m.span));
    }
    let d2 = linspace(m.center - m.span, m.center + m.span, m.points);
    let pts = simulate_layer_matching(&protocol, &grid, m.delta1, &d2)?;
    // Mark the grid point closest to each layer's transition 3 resonance.
    let mut marker = vec![0u8; pts.len()];
    for n in geom.layers() {
        let f = (n - geom.focus) as f64 * shift3;
        if f < d2[0] || f > d2[d2.len() - 1] {
            continue;
        }
        let (i, _) = d2.iter().enumerate().min_by(|a, b| (a.1 - f).abs().total_cmp(&(b.1 - f).abs())).unwrap();
        marker[i] = 1;
    }
    let mut csv = Csv::new(&["delta2_khz", "ratio", "nearest_layer", "signal", "layer_marker"]);
    for (p, mk) in pts.iter().zip(&marker) {
        let ratio = if m.delta1 != 0.0 { p.delta2 / m.delta1 } else { f64::NAN };
        csv.row(&[num(p.delta2), num(ratio), p.nearest_layer.to_string(), num(p.signal), mk.to_string()]);
    }
    ctx.out.write("match.csv", &csv.into_bytes())?;
    if ctx.plot() {
        let data = pts.iter().map(|p| (p.delta2, p.signal)).collect();
        ctx.out.write("match.svg", &svg_plot("Layer matching", "delta2 (kHz)", "signal", &[("signal", data)]))?;
    }
    Ok(())
}

/// `t_s,n` rows; the first must be at t = 0 and gives N₀.
pub fn read_decay_csv(text: &str) -> Result<DecayCurve, CliError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.split(',').map(str::trim).eq(["t_s", "n"]) => {}
        Some((i, _)) => return Err(CliError::Usage(format!("line {}: expected header 't_s,n'", i + 1))),
        None => return Err(CliError::Usage("empty loss curve".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let bad = || CliError::Usage(format!("line {}: expected two numbers, got '{line}'", i + 1));
        let mut cells = line.split(',').map(str::trim);
        let (Some(t), Some(n), None) = (cells.next(), cells.next(), cells.next()) else {
            return Err(bad());
        };
        let t: f64 = t.parse().map_err(|_| bad())?;
        let n: f64 = n.parse().map_err(|_| bad())?;
        if !t.is_finite() || !n.is_finite() || n < 0.0 {
            return Err(bad());
        }
        if rows.last().is_some_and(|&(prev, _)| t <= prev) {
            return Err(CliError::Usage(format!("line {}: times must increase", i + 1)));
        }
        rows.push((t, n));
    }
    match rows.first() {
        Some(&(t, n0)) if t == 0.0 => Ok(DecayCurve { samples: rows[1..].to_vec(), n0 }),
        Some(_) => Err(CliError::Usage("line 2: the first sample must be at t = 0".into())),
        None => Err(CliError::Usage("loss curve has no samples".into())),
    }
}

pub fn loss(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = &ctx.config.loss;
    let input = ctx.args.input.clone().or_else(|| cfg.input.clone());
    let synth = ctx.args.synthesize.or(cfg.synthesize.as_ref().map(|s| (s.alpha, s.beta)));
    let usage = |e: slicer_core::Error| CliError::Usage(e.to_string());
    let grid = |t_half: f64| -> Vec<f64> {
        let end = cfg.span_half_lives * t_half;
        (1..=cfg.samples).map(|i| end * i as f64 / cfg.samples as f64).collect()
    };
    let (name, curve, truth) = if let Some(path) = input {
        let text = fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("{path}: {e}")))?;
        ("input".to_string(), read_decay_csv(&text)?, None)
    } else if let Some((alpha, beta)) = synth {
        let p = LossParams::new(alpha, beta);
        let t = half_life(&p, cfg.n0).map_err(usage)?;
        ("synthetic".to_string(), integrate_loss(&p, cfg.n0, &grid(t)).map_err(usage)?, Some(p))
    } else {
        let preset: LossPreset = ctx.args.preset.as_deref().unwrap_or(&cfg.preset).parse().map_err(usage)?;
        let p = preset.calibrated(cfg.n0)?;
        (preset.name().to_string(), integrate_loss(&p, cfg.n0, &grid(preset.half_life()))?, Some(p))
    };
    if cfg.samples < 5 && truth.is_some() {
        return Err(CliError::Usage("loss.samples must be >= 5".into()));
    }
    let fit = fit_loss(&curve).map_err(|e| match e {
        slicer_core::Error::TooFewSamples { .. } | slicer_core::Error::InvalidParameter(_) => usage(e),
        e => e.into(),
    })?;
    let fitted = LossParams::new(fit.params[0], fit.params[1]);
    let t_half = half_life(&fitted, curve.n0)?;
    let model = integrate_loss(&fitted, curve.n0, &curve.times())?;

    let mut csv = Csv::new(&["t_s", "n", "n_fit"]);
    csv.row(&[num(0.0), num(curve.n0), num(curve.n0)]);
    for (d, m) in curve.samples.iter().zip(&model.samples) {
        csv.row(&[num(d.0), num(d.1), num(m.1)]);
    }
    ctx.out.write(&format!("loss_{name}.csv"), &csv.into_bytes())?;
    let mut rows = vec![
        ("curve", name.clone()),
        ("n0", num(curve.n0)),
        ("alpha_per_s", num(fitted.alpha)),
        ("beta_per_s", num(fitted.beta)),
        ("half_life_ms", num(1e3 * t_half)),
        ("residual_ss", num(fit.residual_ss)),
        ("iterations", fit.iterations.to_string()),
        ("converged", fit.converged.to_string()),
    ];
    if let Some(p) = truth {
        rows.push(("true_alpha_per_s", num(p.alpha)));
        rows.push(("true_beta_per_s", num(p.beta)));
    }
    let text = report(&rows);
    print!("{}", String::from_utf8_lossy(&text));
    ctx.out.write(&format!("loss_{name}_report.txt"), &text)?;
    if ctx.plot() {
        let data: Vec<(f64, f64)> = std::iter::once((0.0, curve.n0)).chain(curve.samples.iter().copied()).collect();
        let fitc: Vec<(f64, f64)> = std::iter::once((0.0, curve.n0)).chain(model.samples.iter().copied()).collect();
        let svg = svg_plot(&format!("Loss ({name})"), "t (s)", "N", &[("data", data), ("fit", fitc)]);
        ctx.out.write(&format!("loss_{name}.svg"), &svg)?;
    }
    if !fit.converged {
        return Err(CliError::OptimizerCap(format!("loss fit after {} iterations", fit.iterations)));
    }
    Ok(())
}

fn image_csv(img: &SpectralImage, coordinate: impl Fn(usize) -> f64) -> Vec<u8> {
    let mut csv = Csv::new(&["x_um", "y_um", "fraction", "freq_khz"]);
    let n = img.pixels;
    for iy in 0..n {
        for ix in 0..n {
            let i = iy * n + ix;
            csv.row(&[num(coordinate(ix)), num(coordinate(iy)), num(img.fraction[i]), num(img.freq[i])]);
        }
    }
    csv.into_bytes()
}

fn metrics_or_empty(img: &SpectralImage, threshold: f64) -> Result<StripeMetrics, CliError> {
    match stripe_metrics(img, threshold) {
        Ok(m) => Ok(m),
        Err(slicer_core::Error::EmptyImage(_)) => Ok(StripeMetrics { spacing: f64::NAN, orientation: f64::NAN, count: 0 }),
        Err(e) => Err(e.into()),
    }
}

pub fn fieldimg(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = ctx.config;
    let img = cfg.imaging()?;
    let model = cfg.zeeman()?;
    let mut field = cfg.imaging_field()?;
    if let Some(s) = ctx.args.shim {
        field.shim = s;
    }
    let sigma = cfg.imaging.noise_sigma;
    let seed = ctx.args.seed.or(cfg.imaging.seed);
    if sigma > 0.0 && seed.is_none() {
        return Err(CliError::Usage("imaging.noise_sigma > 0 needs a seed (--seed or imaging.seed)".into()));
    }
    let profile = WindowProfile::new(&img.window)?;
    let render = |shim: [f64; 2], index: u64| -> Result<(SpectralImage, f64, f64), CliError> {
        let f = field.with_shim(shim);
        let map = frequency_map(&f, &model, &img)?;
        let mut im = synthesize_with(&map, &profile, cfg.imaging.window_center, img.layer_depth);
        if let Some(seed) = seed.filter(|_| sigma > 0.0) {
            add_noise(&mut im, sigma, seed.wrapping_add(index))?;
        }
        Ok((im, map.spread(), transverse_inhomogeneity(&f, img.fov, 101)?))
    };

    let (im, spread, inhom) = render(field.shim, 0)?;
    let m = metrics_or_empty(&im, cfg.imaging.threshold)?;
    ctx.out.write("fieldimg.pgm", &pgm16(im.pixels, im.pixels, &im.fraction))?;
    ctx.out.write("fieldimg.csv", &image_csv(&im, |i| img.coordinate(i)))?;
    let text = report(&[
        ("shim_x_g", num(field.shim[0])),
        ("shim_y_g", num(field.shim[1])),
        ("stripe_count", m.count.to_string()),
        ("stripe_spacing_um", num(m.spacing)),
        ("orientation_deg", num(m.orientation)),
        ("freq_spread_khz", num(spread)),
        ("inhomogeneity_mg", num(inhom)),
        ("mean_fraction", num(im.mean())),
    ]);
    print!("{}", String::from_utf8_lossy(&text));
    ctx.out.write("fieldimg_report.txt", &text)?;

    let sweep = match (&cfg.imaging.sweep, ctx.args.sweep) {
        (Some(s), _) => Some(s.clone()),
        (None, true) => Some(crate::config::ShimSweep { axis: "x".into(), from: 0.0, to: -1.6, steps: 5 }),
        (None, false) => None,
    };
    if let Some(s) = sweep {
        let axis = match s.axis.as_str() {
            "x" => 0,
            "y" => 1,
            other => return Err(CliError::Usage(format!("sweep axis must be x or y, got '{other}'"))),
        };
        if s.steps < 2 {
            return Err(CliError::Usage("sweep needs at least 2 steps".into()));
        }
        let mut csv = Csv::new(&["index", "shim_x_g", "shim_y_g", "stripe_count", "stripe_spacing_um", "orientation_deg", "inhomogeneity_mg"]);
        for (i, v) in linspace(s.from, s.to, s.steps).into_iter().enumerate() {
            let mut shim = field.shim;
            shim[axis] = v;
            let (im, _, inhom) = render(shim, i as u64 + 1)?;
            let m = metrics_or_empty(&im, cfg.imaging.threshold)?;
            ctx.out.write(&format!("fieldimg_sweep_{i:02}.pgm"), &pgm16(im.pixels, im.pixels, &im.fraction))?;
            csv.row(&[
                i.to_string(),
                num(shim[0]),
                num(shim[1]),
                m.count.to_string(),
                num(m.spacing),
                num(m.orientation),
                num(inhom),
            ]);
        }
        ctx.out.write("fieldimg_sweep.csv", &csv.into_bytes())?;
    }
    Ok(())
}

pub fn compensate_cmd(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = ctx.config;
    let img = cfg.imaging()?;
    let field = cfg.imaging_field()?;
    let r = compensate(&field, &cfg.zeeman()?, &img, &cfg.compensation_bounds())?;
    let floor = transverse_inhomogeneity(&field.with_shim([0.0, 0.0]).displaced([-field.quad_center[0], -field.quad_center[1]]), img.fov, 101)?;
    let text = report(&[
        ("shim_x_g", num(r.shim[0])),
        ("shim_y_g", num(r.shim[1])),
        ("displacement_x_um", num(r.displacement_estimate[0])),
        ("displacement_y_um", num(r.displacement_estimate[1])),
        ("initial_inhomogeneity_mg", num(r.initial_inhomogeneity)),
        ("residual_inhomogeneity_mg", num(r.residual_inhomogeneity)),
        ("centred_floor_mg", num(floor)),
        ("detection_bound_mg", num(detection_bound(&img.window, &cfg.zeeman()?, img.transition, field.magnitude_at([0.0; 3])))),
        ("iterations", r.iterations.to_string()),
        ("converged", r.converged.to_string()),
    ]);
    print!("{}", String::from_utf8_lossy(&text));
    ctx.out.write("compensate_report.txt", &text)?;
    if !r.converged {
        return Err(CliError::OptimizerCap(format!("best shim ({}, {}) G after {} iterations", r.shim[0], r.shim[1], r.iterations)));
    }
    Ok(())
}

struct Check {
    name: &'static str,
    value: f64,
    unit: &'static str,
    reference: f64,
    tolerance: f64,
    source: &'static str,
}

pub fn calibrate(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = ctx.config;
    let protocol = cfg.protocol()?;
    let geom = cfg.lattice()?;
    let c = &protocol.context;
    let b = c.field.magnitude_at([0.0; 3]);
    let gradient = c.field.gradient_z_at([0.0; 3]).abs();
    let crosstalk = |on, hit| crosstalk_distance(&c.zeeman, &c.field, on, hit).unwrap_or(f64::NAN);
    let imaging = cfg.imaging()?;
    let checks = [
        Check { name: "field_g", value: b, unit: "G", reference: 11.60, tolerance: 0.02, source: "|B| at the atoms" },
        Check { name: "gradient_mg_per_um", value: gradient, unit: "mG/um", reference: 7.27, tolerance: 0.02, source: "d|B|/dz at the atoms" },
        Check { name: "kappa1", value: c.zeeman.slope(TransitionId::T1, b), unit: "kHz/mG", reference: 2.5028, tolerance: 0.02, source: "df1/dB" },
        Check { name: "kappa2", value: c.zeeman.slope(TransitionId::T2, b), unit: "kHz/mG", reference: 1.9055, tolerance: 0.02, source: "df2/dB" },
        Check { name: "delta1", value: c.shift(&geom, TransitionId::T1), unit: "kHz", reference: 9.68, tolerance: 0.02, source: "kappa1 * B' * a" },
        Check { name: "delta2", value: c.shift(&geom, TransitionId::T2), unit: "kHz", reference: 7.37, tolerance: 0.02, source: "kappa2 * B' * a" },
        Check {
            name: "omega2",
            value: clebsch_gordan_ratio() * protocol.pulse_b.rabi_peak,
            unit: "kHz",
            reference: 5.4,
            tolerance: 0.02,
            source: "sqrt(7/9) * Omega1",
        },
        Check {
            name: "crosstalk_t2_on_t1",
            value: crosstalk(TransitionId::T2, TransitionId::T1),
            unit: "um",
            reference: 384.7,
            tolerance: 0.02,
            source: "(f1 - f2) / (kappa1 * B')",
        },
        Check {
            name: "crosstalk_t1_on_t2",
            value: crosstalk(TransitionId::T1, TransitionId::T2),
            unit: "um",
            reference: 505.3,
            tolerance: 0.02,
            source: "(f1 - f2) / (kappa2 * B')",
        },
        Check {
            name: "detection_bound",
            value: detection_bound(&imaging.window, &c.zeeman, TransitionId::T1, b),
            unit: "mG",
            reference: 1.199,
            tolerance: 0.02,
            source: "delta0 / kappa1",
        },
    ];
    let mut csv = Csv::new(&["quantity", "value", "unit", "reference", "relative_error", "source", "status"]);
    let mut failed = Vec::new();
    for ch in &checks {
        let err = (ch.value - ch.reference).abs() / ch.reference;
        let ok = err <= ch.tolerance;
        if !ok {
            failed.push(ch.name);
        }
        println!("{:<20} {:>12.5} {:<7} (reference {:>8}, {})", ch.name, ch.value, ch.unit, ch.reference, if ok { "ok" } else { "MISMATCH" });
        csv.row(&[
            ch.name.into(),
            num(ch.value),
            ch.unit.into(),
            num(ch.reference),
            num(err),
            ch.source.into(),
            if ok { "ok".into() } else { "mismatch".into() },
        ]);
    }
    let far = [checks[7].value, checks[8].value].iter().all(|&d| d > 300.0);
    if !far {
        failed.push("crosstalk_vs_sample_size");
    }
    ctx.out.write("calibrate.csv", &csv.into_bytes())?;
    if !failed.is_empty() {
        return Err(CliError::Calibration(failed.join(", ")));
    }
    Ok(())
}
