//! Subcommand bodies: resolve settings, compute, emit.

use std::path::PathBuf;

use goodhart_core::conditioning::{
    condition_sweep as core_condition_sweep, conditional_mean_dependent_counterexample,
    insensitivity_check, light_tail_ratio_diagnostic, rejection_conditional_mean,
    rejection_dependent_counterexample, McEstimate, MIN_ACCEPTANCE,
};
use goodhart_core::diagnostics::{ingest_samples, tail_report};
use goodhart_core::distributions::{is_heavy_tailed, ProbeGrid, TailClass, Trend};
use goodhart_core::mdp::{
    assign_ranked_returns, enumerate_trajectories, lift_policy, lift_sweep, midpoint_atoms,
    non_markovian_control, six_state_instance, token_chain, upweight_trajectories, MdpFile,
};
use goodhart_core::rng::{par_chunks, CHUNK};
use goodhart_core::tilting::{mixture_kl, upweight_sweep};
use goodhart_core::{
    make_distribution, Dist, FamilySpec, HScheme, MixtureKlInput, RegionScheme, SampleFormat,
    SampleSet,
};
use serde::Serialize;
use serde_json::json;

use crate::config::{self, GridValue, KGridValue};
use crate::output::{render_json, Cell, Meta, Sink, Table};
use crate::{
    invalid, verify, ConditionArgs, KlArgs, MdpArgs, TailsArgs, TiltArgs, VerifyArgs, EXIT_OK,
    EXIT_SUITE,
};

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn grid(
    flag: &Option<String>,
    file: &Option<GridValue>,
    default: &str,
    field: &str,
) -> anyhow::Result<Vec<f64>> {
    match (flag, file) {
        (Some(s), _) => GridValue::Text(s.clone()).resolve(field),
        (None, Some(g)) => g.resolve(field),
        (None, None) => GridValue::Text(default.to_string()).resolve(field),
    }
}

pub fn law(spec: &str) -> anyhow::Result<Dist> {
    let spec: FamilySpec = spec.parse()?;
    Ok(make_distribution(&spec)?)
}

fn tail_class(d: &Dist) -> anyhow::Result<TailClass> {
    Ok(is_heavy_tailed(d.as_ref(), &ProbeGrid::default_for(d.as_ref()))?.class)
}

fn strictly_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] > w[0])
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

#[derive(Debug, Clone, Serialize)]
pub struct TiltConfig {
    pub base: String,
    pub c: f64,
    pub gamma: f64,
    pub t: Vec<f64>,
    pub allow_light: bool,
}

pub fn resolve_tilt(a: &TiltArgs, f: &config::TiltSection) -> anyhow::Result<TiltConfig> {
    Ok(TiltConfig {
        base: pick(a.base.clone(), f.base.clone(), "student_t:3".into()),
        c: pick(a.c, f.c, 1.0),
        gamma: pick(a.gamma, f.gamma, 1.0),
        t: grid(&a.t, &f.t, "10,100,1000,10000", "t")?,
        allow_light: a.allow_light || f.allow_light.unwrap_or(false),
    })
}

pub fn tilt_sweep(a: &TiltArgs, f: &config::TiltSection, sink: &Sink) -> anyhow::Result<u8> {
    let cfg = resolve_tilt(a, f)?;
    let base = law(&cfg.base)?;
    let class = tail_class(&base)?;
    if class != TailClass::Heavy && !cfg.allow_light {
        return Err(invalid(
            "tilt-sweep",
            "base",
            format!(
                "`{}` is classified {class:?}, not heavy-tailed; pass --allow-light to run anyway",
                cfg.base
            ),
        ));
    }
    let sweep = upweight_sweep(&base, cfg.c, cfg.gamma, &cfg.t)?;
    let meta = Meta::new("tilt-sweep", &cfg)?;
    let mut table = Table::new([
        "t",
        "mass",
        "mean_decomposition",
        "mean_quadrature",
        "kl_exact",
    ]);
    for r in &sweep.rows {
        table.push(vec![
            r.t.into(),
            r.mass.into(),
            r.mean_decomposition.into(),
            r.mean_quadrature.into(),
            r.kl_exact.into(),
        ]);
    }
    sink.primary("tilt_sweep.csv", &table.render(&meta)?)?;
    let summary = json!({
        "base_tail_class": class,
        "base_mean": base.mean(),
        "rows": sweep.rows.len(),
        "mean_increasing": sweep.mean_increasing,
        "kl_decreasing": sweep.kl_decreasing,
        "last": sweep.rows.last(),
    });
    sink.secondary("tilt_sweep.json", &render_json(&meta, summary)?)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionConfig {
    /// Unset for the dependent law, which fixes both marginals.
    pub v: Option<String>,
    pub x: Option<String>,
    pub t: Vec<f64>,
    pub h: String,
    pub p: f64,
    pub dependent: bool,
    pub ratio_c: Option<f64>,
    pub mc_samples: usize,
    pub seed: Option<u64>,
}

pub fn resolve_condition(
    a: &ConditionArgs,
    f: &config::ConditionSection,
) -> anyhow::Result<ConditionConfig> {
    let dependent = a.dependent || f.dependent.unwrap_or(false);
    let default_grid = if dependent {
        "2,5,10,20,30"
    } else {
        "logspace:1e2:1e6:9"
    };
    let cfg = ConditionConfig {
        v: (!dependent).then(|| pick(a.v.clone(), f.v.clone(), "normal:0,1".into())),
        x: (!dependent).then(|| pick(a.x.clone(), f.x.clone(), "pareto:1.5,1".into())),
        t: grid(&a.t, &f.t, default_grid, "t")?,
        h: pick(a.h.clone(), f.h.clone(), "sqrt".into()),
        p: pick(a.p, f.p, 1.5),
        dependent,
        ratio_c: a.ratio_c.or(f.ratio_c),
        mc_samples: pick(a.mc_samples, f.mc_samples, 0),
        seed: a.seed.or(f.seed),
    };
    if cfg.mc_samples > 0 && cfg.seed.is_none() {
        return Err(invalid(
            "condition-sweep",
            "seed",
            "--seed is required with --mc-samples",
        ));
    }
    Ok(cfg)
}

/// The master seed plus the grid index, so each threshold has its own streams.
fn point_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add(i as u64)
}

fn mc_cells(mc: &Option<McEstimate>) -> [Cell; 3] {
    match mc {
        Some(m) => [m.mean.into(), m.std_error.into(), Cell::I(m.accepted)],
        None => [Cell::Empty, Cell::Empty, Cell::Empty],
    }
}

pub fn condition_sweep(
    a: &ConditionArgs,
    f: &config::ConditionSection,
    sink: &Sink,
) -> anyhow::Result<u8> {
    let cfg = resolve_condition(a, f)?;
    let meta = Meta::new("condition-sweep", &cfg)?;
    let run_mc = |i: usize,
                  log_p: f64,
                  sample: &dyn Fn(u64) -> goodhart_core::Result<McEstimate>|
     -> anyhow::Result<Option<McEstimate>> {
        match cfg.seed {
            Some(seed) if cfg.mc_samples > 0 && log_p.exp() >= MIN_ACCEPTANCE => {
                Ok(Some(sample(point_seed(seed, i))?))
            }
            _ => Ok(None),
        }
    };
    let mc_header = ["mc_mean", "mc_std_error", "mc_accepted"];
    let mut means = Vec::new();

    if cfg.dependent {
        let mut table = Table::new(
            [
                "t",
                "conditional_mean",
                "denominator",
                "log_event_probability",
                "abs_error",
            ]
            .into_iter()
            .chain(mc_header),
        );
        for (i, &t) in cfg.t.iter().enumerate() {
            let m = conditional_mean_dependent_counterexample(t)?;
            let mc = run_mc(i, m.log_event_probability, &|s| {
                rejection_dependent_counterexample(t, cfg.mc_samples, s)
            })?;
            let mut row = vec![
                t.into(),
                m.value.into(),
                m.denominator.into(),
                m.log_event_probability.into(),
                m.abs_error.into(),
            ];
            row.extend(mc_cells(&mc));
            table.push(row);
            means.push(m.value);
        }
        sink.primary("condition_sweep.csv", &table.render(&meta)?)?;
        let summary = json!({
            "dependence": "vshaped_counterexample",
            "final_mean": means.last(),
            "mean_increasing": strictly_increasing(&means),
        });
        sink.secondary("condition_sweep.json", &render_json(&meta, summary)?)?;
        return Ok(EXIT_OK);
    }

    let v = law(cfg.v.as_deref().unwrap_or_default())?;
    let x = law(cfg.x.as_deref().unwrap_or_default())?;
    let h: HScheme = cfg.h.parse()?;
    let scheme = RegionScheme::new(h).with_p(cfg.p);
    let rows = core_condition_sweep(&v, &x, &scheme, &cfg.t)?;
    let mut header: Vec<String> = [
        "t",
        "h",
        "conditional_mean",
        "denominator",
        "log_event_probability",
    ]
    .into_iter()
    .map(String::from)
    .collect();
    for k in 1..=4 {
        header.push(format!("r{k}_numerator"));
    }
    for k in 1..=4 {
        header.push(format!("r{k}_mass"));
    }
    header.extend(
        [
            "r3_middle_region_ratio",
            "denominator_lower",
            "denominator_middle",
            "denominator_upper",
        ]
        .map(String::from),
    );
    header.extend(mc_header.map(String::from));
    let mut table = Table::new(header);
    let mut mc_rows = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let mc = run_mc(i, r.mean.log_event_probability, &|s| {
            rejection_conditional_mean(v.as_ref(), x.as_ref(), r.t, cfg.mc_samples, s)
        })?;
        let mut row: Vec<Cell> = vec![
            r.t.into(),
            r.regions.h.into(),
            r.mean.value.into(),
            r.mean.denominator.into(),
            r.mean.log_event_probability.into(),
        ];
        row.extend(r.regions.regions.iter().map(|g| Cell::F(g.numerator)));
        row.extend(r.regions.regions.iter().map(|g| Cell::F(g.mass)));
        row.push(r.regions.middle_region_ratio.into());
        row.extend(r.regions.denominator_pieces.iter().map(|&d| Cell::F(d)));
        row.extend(mc_cells(&mc));
        table.push(row);
        means.push(r.mean.value);
        if let Some(m) = mc {
            let z = (m.mean - r.mean.value) / m.std_error;
            mc_rows.push(json!({ "t": r.t, "mc": m, "z_score": z }));
        }
    }
    sink.primary("condition_sweep.csv", &table.render(&meta)?)?;

    let top = &rows[rows.len().saturating_sub(3)..];
    let region_decreasing: Vec<bool> = (0..4)
        .map(|k| {
            strictly_decreasing(
                &top.iter()
                    .map(|r| r.regions.regions[k].log_numerator)
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let ratio_decreasing = strictly_decreasing(
        &top.iter()
            .map(|r| r.regions.log_middle_region_ratio)
            .collect::<Vec<_>>(),
    );
    let x_class = tail_class(&x)?;
    let insensitivity = match x_class {
        TailClass::Light => None,
        _ => insensitivity_check(x.as_ref(), &scheme, &cfg.t).ok(),
    };
    let ratio = match cfg.ratio_c {
        Some(c) => Some(light_tail_ratio_diagnostic(
            v.as_ref(),
            x.as_ref(),
            c,
            &cfg.t,
        )?),
        None => None,
    };
    let last = rows.last().expect("nonempty grid");
    let summary = json!({
        "dependence": "independent",
        "x_tail_class": x_class,
        "v_mean": v.mean(),
        "final_mean": last.mean.value,
        "final_denominator": last.mean.denominator,
        "mean_increasing": strictly_increasing(&means),
        "mean_trend_to_zero": Trend::of(&means.iter().map(|m| m.abs()).collect::<Vec<_>>()),
        "top_three": { "region_numerators_decreasing": region_decreasing, "middle_region_ratio_decreasing": ratio_decreasing },
        "insensitivity": insensitivity,
        "ratio_diagnostic": ratio,
        "monte_carlo": mc_rows,
    });
    sink.secondary("condition_sweep.json", &render_json(&meta, summary)?)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Serialize)]
pub struct MdpConfig {
    pub input: Option<PathBuf>,
    pub builtin: Option<String>,
    pub alphabet: usize,
    pub max_len: usize,
    pub returns: String,
    pub atoms: usize,
    pub c: f64,
    pub gamma: f64,
    pub t: Vec<f64>,
    pub target_mean: f64,
    pub epsilon: f64,
    pub control_factor: f64,
}

pub fn resolve_mdp(a: &MdpArgs, f: &config::MdpSection) -> anyhow::Result<MdpConfig> {
    let input = a.input.clone().or_else(|| {
        if a.builtin.is_some() {
            None
        } else {
            f.input.clone().map(PathBuf::from)
        }
    });
    let builtin = match &input {
        Some(_) => None,
        None => Some(pick(
            a.builtin.clone(),
            f.builtin.clone(),
            "token-chain".into(),
        )),
    };
    Ok(MdpConfig {
        input,
        builtin,
        alphabet: pick(a.alphabet, f.alphabet, 3),
        max_len: pick(a.max_len, f.max_len, 5),
        returns: pick(a.returns.clone(), f.returns.clone(), "pareto:1.5,1".into()),
        atoms: pick(a.atoms, f.atoms, 64),
        c: pick(a.c, f.c, 3.0),
        gamma: pick(a.gamma, f.gamma, 1.0),
        t: grid(&a.t, &f.t, "4,8,16", "t")?,
        target_mean: pick(a.target_mean, f.target_mean, 5.0),
        epsilon: pick(a.epsilon, f.epsilon, 0.1),
        control_factor: pick(a.control_factor, f.control_factor, 2.0),
    })
}

pub fn build_instance(
    cfg: &MdpConfig,
) -> anyhow::Result<(goodhart_core::Dmrmdp, goodhart_core::Policy)> {
    if let Some(path) = &cfg.input {
        return Ok(MdpFile::read(path)?.into_mdp()?);
    }
    match cfg.builtin.as_deref() {
        Some("six-state") => Ok(six_state_instance()),
        Some("token-chain") => {
            if cfg.atoms == 0 {
                return Err(invalid("mdp-demo", "atoms", "must be positive"));
            }
            let (mut mdp, pol) = token_chain(cfg.alphabet, cfg.max_len)?;
            let atoms = midpoint_atoms(law(&cfg.returns)?.as_ref(), cfg.atoms);
            assign_ranked_returns(&mut mdp, &pol, &atoms)?;
            Ok((mdp, pol))
        }
        other => Err(invalid(
            "mdp-demo",
            "builtin",
            format!(
                "unknown instance `{}`; expected token-chain or six-state",
                other.unwrap_or("")
            ),
        )),
    }
}

pub fn mdp_demo(a: &MdpArgs, f: &config::MdpSection, sink: &Sink) -> anyhow::Result<u8> {
    let cfg = resolve_mdp(a, f)?;
    let (mdp, pol) = build_instance(&cfg)?;
    if let Some(path) = &a.emit_instance {
        let text = serde_json::to_string_pretty(&MdpFile::from_mdp(&mdp, Some(&pol)))? + "\n";
        std::fs::write(path, text).map_err(|source| goodhart_core::Error::Io {
            path: path.clone(),
            source,
        })?;
    }
    let report = lift_sweep(&mdp, &pol, cfg.c, cfg.gamma, &cfg.t)?;
    let base = enumerate_trajectories(&mdp, &pol)?;
    let mut warnings = Vec::new();
    for &t in &cfg.t {
        let (rho, _) = upweight_trajectories(&mdp, &base, cfg.c, t, cfg.gamma)?;
        if let Some(w) = lift_policy(&mdp, &rho, &pol)?.warning(&mdp) {
            warnings.push(format!("t={t}: {w}"));
        }
    }
    let achieving = report
        .rows
        .iter()
        .find(|r| r.mean_return > cfg.target_mean && r.per_state_average_kl < cfg.epsilon)
        .map(|r| r.t);
    let control = non_markovian_control(&mdp, &pol, cfg.control_factor)?;
    if control.is_none() {
        warnings.push("no two trajectories share a final step, so every reweighting lifts; negative control skipped".into());
    }
    let body = json!({
        "instance": {
            "states": mdp.states.len(),
            "actions": mdp.actions.len(),
            "trajectories": report.trajectories,
            "base_mean_return": report.base_mean_return,
        },
        "rows": report.rows,
        "target": { "mean": cfg.target_mean, "epsilon": cfg.epsilon, "first_t": achieving },
        "max_lift_tv": report.rows.iter().map(|r| r.lift_tv).fold(0.0, f64::max),
        "max_chain_rule_residual": report.rows.iter().map(|r| r.chain_rule_residual).fold(0.0, f64::max),
        "negative_control": control,
        "warnings": warnings,
    });
    let meta = Meta::new("mdp-demo", &cfg)?;
    sink.primary("mdp_report.json", &render_json(&meta, body)?)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Serialize)]
pub struct TailsConfig {
    pub input: Option<PathBuf>,
    pub format: SampleFormat,
    pub k_grid: KGridValue,
    pub sample: Option<String>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
}

pub fn resolve_tails(a: &TailsArgs, f: &config::TailsSection) -> anyhow::Result<TailsConfig> {
    let sample = a.sample.clone().or_else(|| {
        if a.input.is_some() {
            None
        } else {
            f.sample.clone()
        }
    });
    let input = match &sample {
        Some(_) => None,
        None => a
            .input
            .clone()
            .or_else(|| f.input.clone().map(PathBuf::from)),
    };
    let cfg = TailsConfig {
        input,
        format: pick(
            a.format.clone(),
            f.format.clone(),
            "csv_single_column".into(),
        )
        .parse()?,
        k_grid: a
            .k_grid
            .clone()
            .map(KGridValue::Text)
            .or_else(|| f.k_grid.clone())
            .unwrap_or(KGridValue::Text("auto".into())),
        n: a.n.or(f.n),
        seed: a.seed.or(f.seed),
        sample,
    };
    match (&cfg.input, &cfg.sample) {
        (None, None) => {
            return Err(invalid(
                "tails",
                "input",
                "pass --input FILE or --sample SPEC",
            ))
        }
        (None, Some(_)) if cfg.seed.is_none() => {
            return Err(invalid("tails", "seed", "--seed is required with --sample"))
        }
        (None, Some(_)) if cfg.n.unwrap_or(0) == 0 => {
            return Err(invalid("tails", "n", "--n must be positive with --sample"))
        }
        _ => {}
    }
    Ok(cfg)
}

/// `n` draws from `d`, chunked onto independent streams of `seed`.
pub fn draw(d: &Dist, n: usize, seed: u64) -> Vec<f64> {
    par_chunks(seed, n, CHUNK, |rng, len| d.sample(rng, len)).concat()
}

pub fn tails(a: &TailsArgs, f: &config::TailsSection, sink: &Sink) -> anyhow::Result<u8> {
    let cfg = resolve_tails(a, f)?;
    let samples = match (&cfg.input, &cfg.sample) {
        (Some(path), _) => ingest_samples(path, cfg.format)?,
        (None, Some(spec)) => {
            let (n, seed) = (cfg.n.unwrap_or(0), cfg.seed.unwrap_or(0));
            SampleSet::new(draw(&law(spec)?, n, seed), spec.clone(), Some(seed))?
        }
        (None, None) => unreachable!("checked in resolve_tails"),
    };
    let ks = config::parse_k_grid(&cfg.k_grid)?;
    let report = tail_report(&samples, ks.as_deref())?;
    let meta = Meta::new("tails", &cfg)?;
    sink.primary("tail_report.json", &render_json(&meta, &report)?)?;
    let mut hill = Table::new(["k", "estimate", "standard_error"]);
    for p in &report.hill_curve.points {
        hill.push(vec![p.k.into(), p.estimate.into(), p.standard_error.into()]);
    }
    sink.secondary("hill.csv", &hill.render(&meta)?)?;
    for (name, plot) in [
        ("normal_qq.csv", &report.normal_qq),
        ("exp_qq.csv", &report.exp_qq),
    ] {
        let mut t = Table::new(["theoretical", "empirical"]);
        for &(q, e) in &plot.pairs {
            t.push(vec![q.into(), e.into()]);
        }
        sink.secondary(name, &t.render(&meta)?)?;
    }
    if !sink.has_dir() {
        eprintln!(
            "verdict: {:?} (pass --out DIR for hill.csv, normal_qq.csv, exp_qq.csv)",
            report.verdict.verdict
        );
    }
    Ok(EXIT_OK)
}

pub fn kl_calc(a: &KlArgs, f: &config::KlSection, sink: &Sink) -> anyhow::Result<u8> {
    let input = MixtureKlInput {
        alpha: pick(a.alpha, f.alpha, 0.01),
        log_q: pick(a.log_q, f.log_q, -1339.70),
        delta_reward: pick(a.delta, f.delta, 0.0),
    };
    let out = mixture_kl(input)?;
    let meta = Meta::new("kl-calc", &input)?;
    sink.primary("kl_calc.json", &render_json(&meta, out)?)?;
    Ok(EXIT_OK)
}

pub fn verify(a: &VerifyArgs, f: &config::VerifySection, sink: &Sink) -> anyhow::Result<u8> {
    let only: Option<Vec<String>> = a.only.clone().or_else(|| f.only.clone()).map(|s| {
        s.split(',')
            .map(|x| x.trim().to_string())
            .filter(|x| !x.is_empty())
            .collect()
    });
    let opts = verify::VerifyOptions {
        seed: pick(a.seed, f.seed, verify::DEFAULT_SEED),
        break_tilt_formula: a.break_tilt_formula,
    };
    let report = verify::run_suites(only.as_deref(), &opts)?;
    for s in &report.suites {
        for c in &s.checks {
            eprintln!(
                "{} {}/{}",
                if c.pass { "PASS" } else { "FAIL" },
                s.suite,
                c.name
            );
        }
    }
    let meta = Meta::new(
        "verify",
        &json!({ "only": only, "seed": opts.seed, "break_tilt_formula": opts.break_tilt_formula }),
    )?;
    sink.primary("verify.json", &render_json(&meta, &report)?)?;
    Ok(if report.pass { EXIT_OK } else { EXIT_SUITE })
}
