use std::path::Path;

use anyhow::{bail, Context, Result};
use hypcoop::analytics::{pair_fraction_detailed, pathloss_tail_integral, ExpectationSpec, PathlossModel};
use hypcoop::mnnr::mnnr_partition;
use hypcoop::numerics::{volume_f_mc, volume_f_paper, volume_f_slice, QuadratureSpec, VolumeEstimate};
use hypcoop::pointprocess::{read_atoms, read_meta, sidecar_path, Boundary, MarkedPattern, PlanarMetric};
use hypcoop::simharness::{run_interference_detailed, run_pair_fraction_detailed, ExperimentConfig};
use hypcoop::{ControlSet, MarkModel, SeededRng};

use crate::config::{window_from, FileConfig, Mode, VolumeMethodArg};
use crate::output::{agrees, emit, exact_cells, num, render, sim_cells, Meta, Table};

const SIM_KEYS: [&str; 4] = ["seed", "reps", "window", "boundary"];
const STATS: [&str; 7] = ["quantity", "mean", "stderr", "ci_lo", "ci_hi", "replicates", "seed"];

fn warn_dropped(dropped: &[&str], command: &str) {
    for d in dropped {
        eprintln!("warning: `{d}` is not used by {command}; ignored");
    }
}

/// Drops fields the command (in its mode) does not read, then fills defaults.
fn prepare(cfg: &mut FileConfig, command: &str, keys: &[&str], sim: bool) {
    let mut keep: Vec<&str> = keys.to_vec();
    if sim {
        keep.extend(SIM_KEYS);
    }
    warn_dropped(&cfg.retain(&keep), command);
    if sim {
        cfg.seed.get_or_insert(1);
        cfg.reps.get_or_insert(400);
        cfg.window.get_or_insert_with(|| "30x30".into());
        cfg.boundary.get_or_insert(Boundary::Torus);
    }
}

fn parse_marks(cfg: &mut FileConfig) -> Result<MarkModel> {
    let spec = cfg.marks.get_or_insert_with(|| "degenerate:mu=0.5".into());
    let m: MarkModel = spec.parse().with_context(|| format!("bad --marks `{spec}`"))?;
    *spec = m.to_string();
    Ok(m)
}

fn parse_control(cfg: &mut FileConfig) -> Result<ControlSet> {
    let spec = cfg.control.get_or_insert_with(|| "full".into());
    let d: ControlSet = spec.parse().with_context(|| format!("bad --control `{spec}`"))?;
    *spec = d.to_string();
    Ok(d)
}

fn experiment(cfg: &mut FileConfig, marks: MarkModel, control: ControlSet) -> Result<ExperimentConfig> {
    let spec = cfg.window.as_deref().unwrap_or("30x30");
    let window = window_from(spec, cfg.boundary.unwrap_or_default())?;
    cfg.window = Some(format!("{}x{}", window.width(), window.height()));
    let mut e = ExperimentConfig::new(cfg.lambda.unwrap_or(1.0), window, marks, control);
    e.replicates = cfg.reps.unwrap_or(400);
    e.master_seed = cfg.seed.unwrap_or(1);
    for w in e.validate()? {
        eprintln!("warning: {w}");
    }
    Ok(e)
}

fn stats_header(prefix: Option<&str>, mode: Mode) -> Vec<&str> {
    let mut h: Vec<&str> = prefix.into_iter().collect();
    h.extend(STATS);
    if mode == Mode::Both {
        h.extend(["analytic", "agree"]);
    }
    h
}

fn analytic_pd(cfg: &FileConfig, m: &MarkModel, d: &ControlSet) -> Result<f64> {
    let e = ExpectationSpec::TensorQuadrature {
        nodes: cfg.nodes.unwrap_or(32),
    };
    Ok(pair_fraction_detailed(cfg.lambda.unwrap_or(1.0), m, d, &e, &QuadratureSpec::default())?.value)
}

fn pd_row(
    quantity: &str,
    prefix: Option<String>,
    mode: Mode,
    analytic: Option<f64>,
    sim: Option<(&hypcoop::simharness::EstimateSummary, u64)>,
) -> Vec<String> {
    let mut row: Vec<String> = prefix.into_iter().collect();
    row.push(quantity.into());
    match (mode, analytic, sim) {
        (Mode::Analytic, Some(a), _) => row.extend(exact_cells(a)),
        (Mode::Sim, _, Some((s, seed))) => row.extend(sim_cells(s, seed)),
        (Mode::Both, Some(a), Some((s, seed))) => {
            row.extend(sim_cells(s, seed));
            row.push(num(a));
            row.push(agrees(a, s).to_string());
        }
        _ => unreachable!("row without the values its mode needs"),
    }
    row
}

fn finish(cfg: &FileConfig, command: &str, notes: Vec<String>, table: &Table, out: Option<&Path>) -> Result<()> {
    let meta = Meta {
        command,
        config: cfg.echo()?,
        notes,
    };
    emit(out, &render(&meta, table)?)
}

pub fn pair_fraction(mut cfg: FileConfig, out: Option<&Path>) -> Result<()> {
    let mode = *cfg.mode.get_or_insert(Mode::Analytic);
    let keys = ["lambda", "marks", "control", "mode", "nodes"];
    prepare(&mut cfg, "pair-fraction", &keys, mode.sim());
    cfg.lambda.get_or_insert(1.0);
    let m = parse_marks(&mut cfg)?;
    let d = parse_control(&mut cfg)?;
    if mode.analytic() {
        cfg.nodes.get_or_insert(32);
    } else {
        cfg.nodes = None;
    }

    let analytic = if mode.analytic() {
        Some(analytic_pd(&cfg, &m, &d)?)
    } else {
        None
    };
    let mut table = Table::new(&stats_header(None, mode));
    if mode.sim() {
        let e = experiment(&mut cfg, m, d)?;
        let run = run_pair_fraction_detailed(&e)?;
        table.push(pd_row(
            "pair_fraction",
            None,
            mode,
            analytic,
            Some((&run.summary, e.master_seed)),
        ));
        let mut rom: Vec<String> = vec!["pair_fraction_ratio_of_means".into(), num(run.ratio_of_means)];
        rom.extend(["", "", ""].map(String::from));
        rom.push(run.summary.replicates.to_string());
        rom.push(e.master_seed.to_string());
        if mode == Mode::Both {
            rom.extend([num(analytic.unwrap_or(f64::NAN)), String::new()]);
        }
        table.push(rom);
    } else {
        table.push(pd_row("pair_fraction", None, mode, analytic, None));
    }
    finish(&cfg, "pair-fraction", Vec::new(), &table, out)
}

pub fn sweep_variance(mut cfg: FileConfig, out: Option<&Path>) -> Result<()> {
    let mode = *cfg.mode.get_or_insert(Mode::Analytic);
    let keys = ["lambda", "mean", "variances", "control", "mode", "nodes"];
    prepare(&mut cfg, "sweep-variance", &keys, mode.sim());
    cfg.lambda.get_or_insert(1.0);
    let mean = *cfg.mean.get_or_insert(0.5);
    let variances = cfg.variances.clone().unwrap_or_default();
    if variances.is_empty() {
        bail!("sweep-variance needs at least one variance (--variances)");
    }
    let d = parse_control(&mut cfg)?;
    let models = variances
        .iter()
        .map(|&v| MarkModel::beta_from_mean_var(mean, v).with_context(|| format!("bad variance {v}")))
        .collect::<Result<Vec<_>>>()?;
    if mode.analytic() {
        cfg.nodes.get_or_insert(32);
    } else {
        cfg.nodes = None;
    }

    let mut table = Table::new(&stats_header(Some("variance"), mode));
    for (v, m) in variances.iter().zip(models) {
        let analytic = if mode.analytic() {
            Some(analytic_pd(&cfg, &m, &d)?)
        } else {
            None
        };
        let row = if mode.sim() {
            let e = experiment(&mut cfg, m, d.clone())?;
            let run = run_pair_fraction_detailed(&e)?;
            pd_row(
                "pair_fraction",
                Some(num(*v)),
                mode,
                analytic,
                Some((&run.summary, e.master_seed)),
            )
        } else {
            pd_row("pair_fraction", Some(num(*v)), mode, analytic, None)
        };
        table.push(row);
    }
    finish(&cfg, "sweep-variance", Vec::new(), &table, out)
}

pub fn interference(mut cfg: FileConfig, out: Option<&Path>) -> Result<()> {
    let mode = *cfg.mode.get_or_insert(Mode::Analytic);
    let keys = [
        "lambda",
        "marks",
        "control",
        "mode",
        "nodes",
        "beta",
        "excl_radius",
        "outer_radius",
    ];
    prepare(&mut cfg, "interference", &keys, mode.sim());
    let lambda = *cfg.lambda.get_or_insert(1.0);
    let beta = *cfg.beta.get_or_insert(2.5);
    let radii = cfg.excl_radius.get_or_insert_with(|| vec![1.0]).clone();
    if radii.is_empty() {
        bail!("interference needs at least one exclusion radius (--excl-radius)");
    }
    let m = parse_marks(&mut cfg)?;
    let d = parse_control(&mut cfg)?;
    if mode.analytic() {
        cfg.nodes.get_or_insert(32);
    } else {
        cfg.nodes = None;
    }
    let models = radii
        .iter()
        .map(|&r| {
            let pl = PathlossModel::new(beta, r)?;
            Ok(match cfg.outer_radius {
                Some(o) => pl.truncated(o)?,
                None => pl,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let pd = if mode.analytic() {
        Some(analytic_pd(&cfg, &m, &d)?)
    } else {
        None
    };
    let exp = if mode.sim() {
        Some(experiment(&mut cfg, m, d)?)
    } else {
        None
    };
    let mut notes = vec![
        "singles are (1 - P_D) * lambda * tail and pairs P_D * lambda * tail, tail = 2*pi*int_R^Rmax u^(1-beta) du"
            .to_string(),
    ];
    if mode.sim() {
        notes.push(
            "simulated interference is measured at the window centre; Rmax defaults to half the shorter window side"
                .into(),
        );
    }

    let mut table = Table::new(&stats_header(Some("excl_radius"), mode));
    for (r, pl) in radii.iter().zip(models) {
        let (run, pl) = match &exp {
            Some(e) => {
                let mut e = e.clone();
                e.pathloss = Some(pl);
                let run = run_interference_detailed(&e)?;
                let pl = run.pathloss;
                (Some((run, e.master_seed)), pl)
            }
            None => (None, pl),
        };
        let tail = lambda * pathloss_tail_integral(&pl)?;
        let analytic = pd.map(|p| [(1.0 - p) * tail, p * tail, tail]);
        for (k, q) in ["singles", "pairs", "total"].into_iter().enumerate() {
            let sim = run.as_ref().map(|(run, seed)| {
                let s = match k {
                    0 => &run.singles,
                    1 => &run.pairs,
                    _ => &run.total,
                };
                (s, *seed)
            });
            table.push(pd_row(q, Some(num(*r)), mode, analytic.map(|a| a[k]), sim));
        }
    }
    finish(&cfg, "interference", notes, &table, out)
}

pub fn cluster(mut cfg: FileConfig, out: Option<&Path>) -> Result<()> {
    warn_dropped(&cfg.retain(&["input", "control", "boundary", "window"]), "cluster");
    let input = cfg.input.clone().context("cluster needs --input <points.csv>")?;
    let d = parse_control(&mut cfg)?;
    let atoms = read_atoms(&input)?;
    let side = sidecar_path(&input);
    let meta = if side.exists() { Some(read_meta(&side)?) } else { None };
    let boundary = *cfg
        .boundary
        .get_or_insert(meta.map(|m| m.boundary).unwrap_or(Boundary::Open));
    let metric = match boundary {
        Boundary::Open => PlanarMetric::open(),
        Boundary::Torus => {
            let spec = match (&cfg.window, meta) {
                (Some(w), _) => w.clone(),
                (None, Some(m)) => format!("{}x{}", m.width, m.height),
                (None, None) => bail!("a torus boundary needs --window WxH or a sidecar {}", side.display()),
            };
            let window = window_from(&spec, boundary)?;
            cfg.window = Some(format!("{}x{}", window.width(), window.height()));
            MarkedPattern::new(atoms.clone(), window, 1.0, 0)?.metric()
        }
    };
    let part = mnnr_partition(&atoms, &d, &metric);
    let summary = format!(
        "pairs={} singles={} n={} pair_fraction={}\nconfig: {}",
        part.pairs.len(),
        part.singles.len(),
        part.pattern_size,
        part.pair_fraction(),
        cfg.echo()?
    );
    let mut json = part.to_json()?;
    json.push('\n');
    emit(out, json.as_bytes())?;
    if out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(())
}

pub fn volume(mut cfg: FileConfig, out: Option<&Path>) -> Result<()> {
    let method = *cfg.method.get_or_insert(VolumeMethodArg::Slice);
    let mc = matches!(method, VolumeMethodArg::Mc | VolumeMethodArg::All);
    let mut keys = vec!["s", "z", "ztilde", "marks", "method"];
    if mc {
        keys.extend(["samples", "seed"]);
    }
    warn_dropped(&cfg.retain(&keys), "volume");
    let (Some(s), Some(z), Some(z_t)) = (cfg.s, cfg.z, cfg.ztilde) else {
        bail!("volume needs --s, --z and --ztilde");
    };
    let m = parse_marks(&mut cfg)?;
    let q = QuadratureSpec::default();
    let mut rows: Vec<(&str, VolumeEstimate)> = Vec::new();
    let mut notes = Vec::new();
    if matches!(method, VolumeMethodArg::Slice | VolumeMethodArg::All) {
        rows.push(("slice", volume_f_slice(s, z, z_t, &m, &q)?));
    }
    if matches!(method, VolumeMethodArg::Paper | VolumeMethodArg::All) {
        if method == VolumeMethodArg::All && m.is_degenerate() {
            notes.push("paper form skipped: it needs a mark density".to_string());
        } else {
            rows.push(("paper", volume_f_paper(s, z, z_t, &m, &q)?));
        }
    }
    if mc {
        let n = *cfg.samples.get_or_insert(1_000_000);
        let seed = *cfg.seed.get_or_insert(1);
        rows.push(("mc", volume_f_mc(s, z, z_t, &m, n, &mut SeededRng::new(seed))?));
    }
    if rows.len() > 1 {
        let mut max_dev = 0.0f64;
        for (i, a) in rows.iter().enumerate() {
            for b in &rows[i + 1..] {
                max_dev = max_dev.max((a.1.value - b.1.value).abs());
            }
        }
        notes.push(format!("max_pairwise_deviation: {}", num(max_dev)));
        let det: Vec<f64> = rows.iter().filter(|r| r.0 != "mc").map(|r| r.1.value).collect();
        if let [a, b] = det[..] {
            notes.push(format!(
                "slice_vs_paper_rel_deviation: {}",
                num((a - b).abs() / a.abs().max(f64::MIN_POSITIVE))
            ));
        }
        if let Some(mc) = rows.iter().find(|r| r.0 == "mc").map(|r| r.1) {
            let worst = det.iter().map(|v| (v - mc.value).abs()).fold(0.0, f64::max);
            notes.push(format!("mc_within_3_stderr: {}", worst <= 3.0 * mc.stderr));
        }
    }
    let mut table = Table::new(&["method", "value", "stderr"]);
    for (name, est) in &rows {
        table.push(vec![name.to_string(), num(est.value), num(est.stderr)]);
    }
    finish(&cfg, "volume", notes, &table, out)
}
