use std::f64::consts::PI;

use needlet_core::correlation::{
    correlation, decay_exponent_fit, envelope_constant, persistence_radius, CorrelationQuery, CorrelationReport,
    EnvelopeConstants, Lattice,
};
use needlet_core::field::{monte_carlo_pairs, pearson_jackknife, MonteCarloConfig, REPLICATE_CSV_HEADER};
use needlet_core::kernels::{smhw_approximation_gap, smhw_gap_curve};
use needlet_core::stats::{clt_experiment, gamma_monte_carlo, CltThresholds, SimulationSettings, StatisticConfig};
use needlet_core::{NeedletKernel, PowerSpectrum, SmhwProfile, SphericalPoint};
use serde_json::json;

use crate::config::{ConfigError, ExperimentConfig};
use crate::output::Output;
use crate::CliError;

/// Outcome of a command that ran to completion.
pub enum Verdict {
    Done,
    /// A check command whose assertion did not hold.
    CheckFailed(String),
}

/// Largest decrease between consecutive scales the persistence check tolerates.
const MONOTONE_SLACK: f64 = 1e-6;

fn core<E: Into<needlet_core::Error>>(e: E) -> CliError {
    CliError::Core(e.into())
}

fn alpha_of(spectrum: &PowerSpectrum, command: &str) -> Result<f64, CliError> {
    match spectrum {
        PowerSpectrum::AlphaRegular { alpha, .. } => Ok(*alpha),
        _ => Err(ConfigError::Field {
            field: "spectrum.variant",
            message: format!("{command} needs the alpha_regular variant"),
        }
        .into()),
    }
}

fn order_of(kernel: &NeedletKernel, command: &str) -> Result<u32, CliError> {
    kernel.order().ok_or_else(|| {
        ConfigError::Field { field: "kernel.kind", message: format!("{command} needs the mexican kernel") }.into()
    })
}

fn diagonal(kernel: NeedletKernel, spectrum: &PowerSpectrum, js: &[u32], theta: f64, tol: f64) -> Result<Vec<(u32, f64, usize)>, CliError> {
    js.iter()
        .map(|&j| {
            let q = CorrelationQuery { kernel, spectrum: spectrum.clone(), j1: j, j2: j, theta, tolerance: tol };
            let v = correlation(&q).map_err(core)?;
            Ok((j, v.corr, v.l_max))
        })
        .collect()
}

pub fn kernel_dump(cfg: &ExperimentConfig, out: &mut Output) -> Result<Verdict, CliError> {
    let kernel = cfg.kernel()?;
    let js = cfg.scales();
    out.csv("kernel_weights.csv", |w| {
        writeln!(w, "j,l,weight")?;
        for &j in &js {
            for l in 1..=kernel.truncation_degree(j) {
                writeln!(w, "{j},{l},{}", kernel.weight(l, j))?;
            }
        }
        Ok(())
    })?;
    let n = cfg.run.fit_points;
    let thetas: Vec<f64> = (0..n).map(|i| PI * i as f64 / (n - 1) as f64).collect();
    let cos: Vec<f64> = thetas.iter().map(|t| t.cos()).collect();
    let profiles = js.iter().map(|&j| kernel.profile_series(j, &cos).map_err(core)).collect::<Result<Vec<_>, _>>()?;
    out.csv("kernel_profile.csv", |w| {
        writeln!(w, "j,theta,psi")?;
        for (&j, psi) in js.iter().zip(&profiles) {
            for (t, v) in thetas.iter().zip(psi) {
                writeln!(w, "{j},{t},{v}")?;
            }
        }
        Ok(())
    })?;
    Ok(Verdict::Done)
}

pub fn corr_table(cfg: &ExperimentConfig, out: &mut Output) -> Result<Verdict, CliError> {
    let (kernel, spectrum) = (cfg.kernel()?, cfg.spectrum()?);
    let lattice = Lattice::square(&cfg.scales(), &cfg.run.thetas);
    let report = CorrelationReport::compute(&kernel, &spectrum, &lattice, cfg.run.tolerance, None).map_err(core)?;
    out.csv("corr_table.csv", |w| report.write_csv(w))?;
    out.json("corr_table.json", report.to_json())?;
    Ok(Verdict::Done)
}

pub fn decay_fit(cfg: &ExperimentConfig, out: &mut Output) -> Result<Verdict, CliError> {
    let (kernel, spectrum) = (cfg.kernel()?, cfg.spectrum()?);
    let base = kernel.base();
    let rows = diagonal(kernel, &spectrum, &cfg.scales(), cfg.run.theta, cfg.run.tolerance)?;
    let pts: Vec<(u32, f64)> = rows.iter().map(|&(j, c, _)| (j, c)).collect();
    let fit = decay_exponent_fit(&pts, base).map_err(core)?;
    let x = |j: u32| j as f64 - (j as f64).ln() / base.ln();
    out.csv("decay_fit.csv", |w| {
        writeln!(w, "j,x,corr,fitted,lmax")?;
        for &(j, c, l) in &rows {
            let fitted = (fit.intercept - fit.exponent * x(j) * base.ln()).exp();
            writeln!(w, "{j},{},{c},{fitted},{l}", x(j))?;
        }
        Ok(())
    })?;
    out.json(
        "decay_fit.json",
        json!({
            "kernel": kernel,
            "spectrum": spectrum,
            "theta": cfg.run.theta,
            "scales": pts.iter().map(|p| p.0).collect::<Vec<_>>(),
            "corr": pts.iter().map(|p| p.1).collect::<Vec<_>>(),
            "fit": fit,
        }),
    )?;
    Ok(Verdict::Done)
}

pub fn bound_check(cfg: &ExperimentConfig, out: &mut Output) -> Result<Verdict, CliError> {
    let (kernel, spectrum) = (cfg.kernel()?, cfg.spectrum()?);
    let alpha = alpha_of(&spectrum, "bound-check")?;
    let p = order_of(&kernel, "bound-check")?;
    let (c0, cg) = (cfg.spectrum.c0, cfg.spectrum.cg);
    // surfaces the regime error before any series work
    let constant = envelope_constant(p, alpha, kernel.base(), c0, cg).map_err(core)?;
    let lattice = Lattice::square(&cfg.scales(), &cfg.run.thetas);
    let report = CorrelationReport::compute(&kernel, &spectrum, &lattice, cfg.run.tolerance, Some(EnvelopeConstants { c0, cg }))
        .map_err(core)?;
    let violations = report.bound_violations().len();
    out.csv("bound_check.csv", |w| report.write_csv(w))?;
    let mut doc = report.to_json();
    doc["envelope_constant"] = json!(constant);
    doc["violations"] = json!(violations);
    doc["pass"] = json!(violations == 0);
    out.json("bound_check.json", doc)?;
    Ok(if violations == 0 {
        Verdict::Done
    } else {
        Verdict::CheckFailed(format!("{violations} of {} rows exceed the decorrelation bound", report.entries.len()))
    })
}

pub fn supercritical_check(cfg: &ExperimentConfig, out: &mut Output) -> Result<Verdict, CliError> {
    let (kernel, spectrum) = (cfg.kernel()?, cfg.spectrum()?);
    let alpha = alpha_of(&spectrum, "supercritical-check")?;
    let p = order_of(&kernel, "supercritical-check")?;
    let eps = cfg.run.epsilon;
    let delta = persistence_radius(eps, alpha, p, cfg.spectrum.c0).map_err(core)?;
    let theta = delta.min(cfg.run.theta_cap);
    let rows = diagonal(kernel, &spectrum, &cfg.scales(), theta, cfg.run.tolerance)?;
    let above = rows.iter().all(|r| r.1 > 1.0 - eps);
    let largest_rise = rows.windows(2).map(|w| w[1].1 - w[0].1).fold(f64::NEG_INFINITY, f64::max);
    let largest_drop = rows.windows(2).map(|w| w[0].1 - w[1].1).fold(f64::NEG_INFINITY, f64::max);
    let monotone = largest_drop <= MONOTONE_SLACK;
    out.csv("supercritical.csv", |w| {
        writeln!(w, "j,theta,corr,lmax")?;
        for &(j, c, l) in &rows {
            writeln!(w, "{j},{theta},{c},{l}")?;
        }
        Ok(())
    })?;
    let pass = above && monotone;
    out.json(
        "supercritical.json",
        json!({
            "kernel": kernel,
            "spectrum": spectrum,
            "epsilon": eps,
            "delta": delta,
            "theta": theta,
            "scales": rows.iter().map(|r| r.0).collect::<Vec<_>>(),
            "corr": rows.iter().map(|r| r.1).collect::<Vec<_>>(),
            "all_above_threshold": above,
            "largest_drop": largest_drop,
            "largest_rise": largest_rise,
            "non_decreasing": monotone,
            "pass": pass,
        }),
    )?;
    Ok(if pass {
        Verdict::Done
    } else {
        Verdict::CheckFailed(format!(
            "persistence not observed: all corr > 1 - eps: {above}, largest drop between scales {largest_drop:.3e}"
        ))
    })
}

pub fn smhw_gap(cfg: &ExperimentConfig, out: &mut Output) -> Result<Verdict, CliError> {
    let kernel = cfg.kernel()?;
    order_of(&kernel, "smhw-gap")?;
    let n = cfg.run.fit_points;
    let mut rows = Vec::new();
    for j in cfg.scales() {
        let prof = SmhwProfile::new(kernel.base(), j).map_err(core)?;
        let t = prof.scale();
        let fit = smhw_approximation_gap(&prof, &kernel, &prof.default_fit_grid(n)).map_err(core)?;
        let near = (8.0 * t).min(1.0);
        let mut thetas: Vec<f64> = (1..=n).map(|i| near * i as f64 / n as f64).collect();
        thetas.extend((1..=n).map(|i| near + (1.0 - near) * i as f64 / n as f64));
        let gap = smhw_gap_curve(&prof, &kernel, fit.k_fit, &thetas).map_err(core)?;
        let sup = gap.iter().fold(0.0f64, |m, g| m.max(*g));
        let b4j = kernel.base().powi(4 * j as i32);
        let ratio = thetas.iter().zip(&gap).map(|(th, g)| g / (th.powi(4) * b4j).min(1.0)).fold(0.0f64, f64::max);
        rows.push((j, fit.k_fit, sup, sup / t, ratio));
    }
    out.csv("smhw_gap.csv", |w| {
        writeln!(w, "j,k_fit,sup_gap,sup_gap_over_scale,sup_gap_ratio")?;
        for (j, k, s, st, r) in &rows {
            writeln!(w, "{j},{k},{s},{st},{r}")?;
        }
        Ok(())
    })?;
    out.json(
        "smhw_gap.json",
        json!({
            "kernel": kernel,
            "rows": rows.iter().map(|(j, k, s, st, r)| json!({
                "j": j, "k_fit": k, "sup_gap": s, "sup_gap_over_scale": st, "sup_gap_ratio": r,
            })).collect::<Vec<_>>(),
        }),
    )?;
    Ok(Verdict::Done)
}

pub fn mc_corr(cfg: &ExperimentConfig, out: &mut Output) -> Result<Verdict, CliError> {
    let (kernel, spectrum) = (cfg.kernel()?, cfg.spectrum()?);
    let (j, theta) = (cfg.run.j, cfg.run.theta);
    // two points on a meridian, symmetric about the equator
    let a = SphericalPoint::new(PI / 2.0 - theta / 2.0, 0.4).map_err(core)?;
    let b = SphericalPoint::new(PI / 2.0 + theta / 2.0, 0.4).map_err(core)?;
    let mc = MonteCarloConfig {
        replicates: cfg.run.replicates,
        seed: cfg.run.seed,
        kernel,
        spectrum: spectrum.clone(),
        j,
        points: (a, b),
        l_max: cfg.run.l_max,
    };
    let (pairs, l_max) = monte_carlo_pairs(&mc).map_err(core)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let (corr, se) = pearson_jackknife(&xs, &ys).map_err(core)?;
    let q = CorrelationQuery { kernel, spectrum: spectrum.clone(), j1: j, j2: j, theta, tolerance: cfg.run.tolerance };
    let analytic = correlation(&q).map_err(core)?.corr;
    if cfg.run.write_replicates {
        out.csv("mc_replicates.csv", |w| {
            writeln!(w, "{REPLICATE_CSV_HEADER}")?;
            for (r, (x, y)) in pairs.iter().enumerate() {
                writeln!(w, "{r},0,{x}")?;
                writeln!(w, "{r},1,{y}")?;
            }
            Ok(())
        })?;
    }
    out.json(
        "mc_corr.json",
        json!({
            "kernel": kernel,
            "spectrum": spectrum,
            "j": j,
            "theta": theta,
            "replicates": pairs.len(),
            "l_max": l_max,
            "empirical": corr,
            "standard_error": se,
            "analytic": analytic,
            "z": (corr - analytic) / se,
        }),
    )?;
    Ok(Verdict::Done)
}

fn settings(cfg: &ExperimentConfig, j: u32, seed: u64) -> Result<SimulationSettings, CliError> {
    Ok(SimulationSettings {
        kernel: cfg.kernel()?,
        spectrum: cfg.spectrum()?,
        j,
        seed,
        l_max: cfg.run.l_max,
        tolerance: cfg.run.tolerance,
    })
}

pub fn clt(cfg: &ExperimentConfig, out: &mut Output) -> Result<Verdict, CliError> {
    let s = settings(cfg, cfg.run.j, cfg.run.seed)?;
    let stats = match &cfg.run.weights {
        Some(w) => StatisticConfig::new(w.clone()),
        None => StatisticConfig::single_orders(&cfg.run.orders),
    }
    .map_err(core)?;
    let r = cfg.run.replicates;
    let outcome =
        clt_experiment(&s, &stats, r, cfg.run.omega_replicates, CltThresholds::for_replicates(r)).map_err(core)?;
    out.csv("clt.csv", |w| outcome.report.write_csv(w))?;
    out.json(
        "clt.json",
        json!({
            "kernel": s.kernel,
            "spectrum": s.spectrum,
            "j": s.j,
            "weights": stats.weights(),
            "points": outcome.points,
            "l_max": outcome.l_max,
            "omega": outcome.omega,
            "report": outcome.report,
        }),
    )?;
    Ok(Verdict::Done)
}

pub fn gamma(cfg: &ExperimentConfig, out: &mut Output) -> Result<Verdict, CliError> {
    let mut rows = Vec::new();
    for j in cfg.scales() {
        // one independent seed per scale
        let s = settings(cfg, j, cfg.run.seed.wrapping_add(j as u64))?;
        rows.push((j, gamma_monte_carlo(&s, cfg.run.replicates).map_err(core)?));
    }
    out.csv("gamma.csv", |w| {
        writeln!(w, "j,mean,standard_error,analytic,z")?;
        for (j, g) in &rows {
            writeln!(w, "{j},{},{},{},{}", g.mean, g.standard_error, g.analytic, (g.mean - g.analytic) / g.standard_error)?;
        }
        Ok(())
    })?;
    out.json(
        "gamma.json",
        json!({
            "kernel": cfg.kernel()?,
            "spectrum": cfg.spectrum()?,
            "rows": rows.iter().map(|(j, g)| json!({ "j": j, "check": g, "within_3se": g.within(3.0) })).collect::<Vec<_>>(),
        }),
    )?;
    Ok(Verdict::Done)
}
