//! Subcommand implementations: thin orchestration over the library.

use crate::output::Table;
use crate::{Command, OutputArgs, ProbeArgs};
use abstain_metrology::asymptotics;
use abstain_metrology::blocksolver::{
    constrained_block_solve, critical_block_success, unconstrained_minimum,
};
use abstain_metrology::noise::NoiseModel;
use abstain_metrology::oracle;
use abstain_metrology::probes::{self, SymmetricProbe};
use abstain_metrology::scavenge;
use abstain_metrology::simulate::{self, DensityModel};
use abstain_metrology::spin::HalfSpin;
use abstain_metrology::spinblocks::decompose;
use abstain_metrology::tradeoff::{allocate, deterministic_uncertainty, ultimate_postselect};
use anyhow::{bail, Context, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ProbeKind {
    Multicopy,
    Optimal,
    Ground,
    File,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum GeneratedProbe {
    Multicopy,
    Optimal,
    Ground,
}

fn build_probe(args: &ProbeArgs, n: usize, noise: NoiseModel) -> Result<SymmetricProbe> {
    let probe = match args.probe {
        ProbeKind::Multicopy => probes::multicopy(n)?,
        ProbeKind::Optimal => probes::optimal_gaussian(n, noise)?,
        ProbeKind::Ground => probes::ground_profile_probe(n, noise)?,
        ProbeKind::File => {
            let path = args
                .probe_file
                .as_ref()
                .context("--probe file requires --probe-file")?;
            let probe = probes::from_file(path)?;
            if probe.n() != n {
                bail!(
                    "probe file is for n = {}, but --n {} was requested",
                    probe.n(),
                    n
                );
            }
            probe
        }
    };
    Ok(probe)
}

fn abstention_grid(points: usize, max: f64) -> Result<Vec<f64>> {
    if points < 2 || !(0.0 < max && max < 1.0) {
        bail!("abstention grid needs at least 2 points with 0 < s-bar-max < 1");
    }
    Ok((0..points)
        .map(|k| max * (k as f64 / (points - 1) as f64))
        .collect())
}

fn geometric_grid(lo: usize, hi: usize, steps: usize) -> Result<Vec<usize>> {
    if lo < 1 || hi < lo || steps < 2 {
        bail!("n sweep needs 1 <= n-min <= n-max and at least 2 steps");
    }
    let mut out: Vec<usize> = (0..steps)
        .map(|k| {
            let t = k as f64 / (steps - 1) as f64;
            ((lo as f64).ln() + t * ((hi as f64).ln() - (lo as f64).ln()))
                .exp()
                .round() as usize
        })
        .collect();
    out.dedup();
    Ok(out)
}

pub fn run(command: Command, invocation: &str) -> Result<()> {
    match command {
        Command::Tradeoff {
            n,
            r,
            s_grid,
            s_bar_max,
            tol,
            probe,
            output,
        } => tradeoff_cmd(n, r, s_grid, s_bar_max, tol, &probe, &output, invocation),
        Command::Scaling {
            r,
            n_min,
            n_max,
            n_steps,
            s_bar,
            tol,
            output,
        } => scaling_cmd(r, n_min, n_max, n_steps, &s_bar, tol, &output, invocation),
        Command::Scavenge {
            n,
            r,
            s_grid,
            tol,
            probe,
            output,
        } => scavenge_cmd(n, r, s_grid, tol, &probe, &output, invocation),
        Command::Profile {
            n,
            r,
            s,
            j,
            probe,
            output,
        } => profile_cmd(n, r, s, j, &probe, &output, invocation),
        Command::Ultimate {
            r,
            n,
            n_min,
            n_max,
            n_steps,
            sum_critical,
            probe,
            output,
        } => ultimate_cmd(r, n, n_min, n_max, n_steps, sum_critical, &probe, &output, invocation),
        Command::Simulate {
            n,
            r,
            s_bar,
            samples,
            seed,
            theta,
            probe,
            output,
        } => simulate_cmd(n, r, s_bar, samples, seed, theta, &probe, &output, invocation),
        Command::OracleCheck {
            n,
            r,
            probes,
            seed,
            tol,
            output,
        } => oracle_check_cmd(n, r, probes, seed, tol, &output, invocation),
        Command::ProbeGen { kind, n, r, out } => probe_gen_cmd(kind, n, r, &out),
    }
}

#[allow(clippy::too_many_arguments)]
fn tradeoff_cmd(
    n: usize,
    r: f64,
    s_grid: usize,
    s_bar_max: f64,
    tol: f64,
    probe: &ProbeArgs,
    output: &OutputArgs,
    invocation: &str,
) -> Result<()> {
    let noise = NoiseModel::new(r)?;
    let probe = build_probe(probe, n, noise)?;
    let dec = decompose(&probe, noise)?;
    let mut table = Table::new(vec!["S_bar", "S", "sigma2", "n_sigma2"]);
    for s_bar in abstention_grid(s_grid, s_bar_max)? {
        let point = allocate(&dec.blocks, &dec.hams, 1.0 - s_bar)?;
        if point.dual_gap() > tol {
            bail!(
                "allocation gap {:.2e} exceeds --tol {tol:.2e} at S_bar = {s_bar}",
                point.dual_gap()
            );
        }
        table.push(vec![
            s_bar,
            point.s(),
            point.sigma2(),
            n as f64 * point.sigma2(),
        ]);
    }
    table.write(output.format, invocation, output.out.as_deref())
}

#[allow(clippy::too_many_arguments)]
fn scaling_cmd(
    r: f64,
    n_min: usize,
    n_max: usize,
    n_steps: usize,
    s_bar: &[f64],
    tol: f64,
    output: &OutputArgs,
    invocation: &str,
) -> Result<()> {
    let noise = NoiseModel::new(r)?;
    for &sb in s_bar {
        if !(0.0..1.0).contains(&sb) {
            bail!("abstention probability {sb} outside [0, 1)");
        }
    }
    let mut columns = vec!["n".to_string(), "sigma2_det".to_string()];
    for sb in s_bar {
        columns.push(format!("sigma2_sbar_{sb}"));
        columns.push(format!("approx_sbar_{sb}"));
    }
    columns.push("sigma2_ult_exact".to_string());
    columns.push("sigma2_ult_asym".to_string());
    let mut table = Table::new(columns);
    for n in geometric_grid(n_min, n_max, n_steps)? {
        let probe = probes::multicopy(n)?;
        let dec = decompose(&probe, noise)?;
        let det = deterministic_uncertainty(&dec.blocks)?;
        let mut row = vec![n as f64, det];
        for &sb in s_bar {
            let point = allocate(&dec.blocks, &dec.hams, 1.0 - sb)?;
            if point.dual_gap() > tol {
                bail!("allocation gap beyond --tol at n = {n}, S_bar = {sb}");
            }
            row.push(point.sigma2());
            row.push(asymptotics::finite_s_approx(n, r, 1.0 - sb));
        }
        let (ult, _) = ultimate_postselect(&dec.blocks, &dec.hams)?;
        row.push(ult);
        row.push(asymptotics::ultimate_bound(n, r));
        table.push(row);
    }
    table.write(output.format, invocation, output.out.as_deref())
}

fn scavenge_cmd(
    n: usize,
    r: f64,
    s_grid: usize,
    tol: f64,
    probe: &ProbeArgs,
    output: &OutputArgs,
    invocation: &str,
) -> Result<()> {
    let noise = NoiseModel::new(r)?;
    let probe = build_probe(probe, n, noise)?;
    let dec = decompose(&probe, noise)?;
    let det = deterministic_uncertainty(&dec.blocks)?;
    let mut table = Table::new(vec![
        "S_bar",
        "sigma2_opt",
        "sigma2_bar",
        "sigma2_all",
        "sigma2_det",
    ]);
    for k in 1..=s_grid {
        // abstention strictly inside (0, 1) so both branches carry weight
        let s_bar = k as f64 / (s_grid + 1) as f64;
        let point = allocate(&dec.blocks, &dec.hams, 1.0 - s_bar)?;
        if point.dual_gap() > tol {
            bail!("allocation gap beyond --tol at S_bar = {s_bar}");
        }
        let (_, bar) = scavenge::scavenged_variance(&dec.blocks, &point)?;
        let all = scavenge::all_outcomes_variance(&dec.blocks, &point)?;
        table.push(vec![
            s_bar,
            point.sigma2(),
            bar.unwrap_or(f64::NAN),
            all,
            det,
        ]);
    }
    table.write(output.format, invocation, output.out.as_deref())
}

fn profile_cmd(
    n: usize,
    r: f64,
    s: f64,
    j: Option<f64>,
    probe: &ProbeArgs,
    output: &OutputArgs,
    invocation: &str,
) -> Result<()> {
    let noise = NoiseModel::new(r)?;
    let probe = build_probe(probe, n, noise)?;
    let dec = decompose(&probe, noise)?;
    // default block: the typical spin j = n r / 2, parity-matched to n
    let j2 = match j {
        Some(v) => (2.0 * v).round() as i64,
        None => {
            let mut guess = (n as f64 * r).round() as i64;
            if (guess - n as i64) % 2 != 0 {
                guess += 1;
            }
            guess.clamp(n as i64 % 2, n as i64)
        }
    };
    let j = HalfSpin::from_doubled(j2);
    let idx = dec
        .blocks
        .iter()
        .position(|b| b.j() == j)
        .with_context(|| format!("no block with spin {j} for n = {n}"))?;
    let block = &dec.blocks[idx];
    if !block.has_state() {
        bail!("block {j} carries no state for this probe and noise");
    }
    let sol = constrained_block_solve(block, &dec.hams[idx], s)?;
    let jv = j.value();
    let mut table = Table::new(vec!["x", "phi_tilde", "phi", "V"]);
    for (i, m) in j.magnetic_numbers().enumerate() {
        let x = m.value() / jv;
        let phi_tilde = (jv * block.diag()[i]).sqrt();
        let phi = jv.sqrt() * sol.xi()[i];
        let v = asymptotics::potential(jv, r, x).unwrap_or(f64::NAN);
        table.push(vec![x, phi_tilde, phi, v]);
    }
    table.write(output.format, invocation, output.out.as_deref())
}

#[allow(clippy::too_many_arguments)]
fn ultimate_cmd(
    r: f64,
    n: Option<usize>,
    n_min: Option<usize>,
    n_max: Option<usize>,
    n_steps: usize,
    sum_critical: bool,
    probe: &ProbeArgs,
    output: &OutputArgs,
    invocation: &str,
) -> Result<()> {
    let noise = NoiseModel::new(r)?;
    let grid = match (n, n_min, n_max) {
        (Some(n), None, None) => vec![n],
        (None, Some(lo), Some(hi)) => geometric_grid(lo, hi, n_steps)?,
        _ => bail!("give either --n or both --n-min and --n-max"),
    };
    let mut columns = vec![
        "n".to_string(),
        "sigma2_ult_exact".to_string(),
        "sigma2_ult_asym".to_string(),
        "p_max_spin".to_string(),
        "s_star_max_spin".to_string(),
        "critical_success_plateau".to_string(),
    ];
    if sum_critical {
        columns.push("critical_success_sum".to_string());
    }
    let mut table = Table::new(columns);
    for n in grid {
        let probe = build_probe(probe, n, noise)?;
        let dec = decompose(&probe, noise)?;
        let top = dec
            .blocks
            .iter()
            .zip(&dec.hams)
            .filter(|(b, _)| b.has_state())
            .next_back()
            .context("no block with a defined state")?;
        let (lam, ground) = unconstrained_minimum(top.1)?;
        let s_star = critical_block_success(top.0, &ground)?;
        let p_top = top.0.probability();
        let mut row = vec![
            n as f64,
            lam,
            asymptotics::ultimate_bound(n, r),
            p_top,
            s_star,
            p_top * s_star,
        ];
        if sum_critical {
            row.push(abstain_metrology::tradeoff::critical_success(
                &dec.blocks,
                &dec.hams,
            )?);
        }
        table.push(row);
    }
    table.write(output.format, invocation, output.out.as_deref())
}

#[allow(clippy::too_many_arguments)]
fn simulate_cmd(
    n: usize,
    r: f64,
    s_bar: f64,
    samples: u64,
    seed: u64,
    theta: f64,
    probe: &ProbeArgs,
    output: &OutputArgs,
    invocation: &str,
) -> Result<()> {
    if samples == 0 {
        bail!("--samples must be positive");
    }
    let noise = NoiseModel::new(r)?;
    let probe = build_probe(probe, n, noise)?;
    let dec = decompose(&probe, noise)?;
    let point = allocate(&dec.blocks, &dec.hams, 1.0 - s_bar)?;
    let model = DensityModel::new(&dec.blocks, &point)?;
    let stats = simulate::simulate_batch(&model, theta, samples, seed)?;
    let deviation = (stats.mean_loss() - point.sigma2()).abs();
    let mut table = Table::new(vec![
        "n",
        "r",
        "S_bar",
        "S_model",
        "theta",
        "samples",
        "successes",
        "success_rate",
        "empirical_loss",
        "std_error",
        "sigma2_model",
        "deviation_in_std_errors",
    ]);
    table.push(vec![
        n as f64,
        r,
        s_bar,
        point.s(),
        theta,
        samples as f64,
        stats.successes as f64,
        stats.success_rate(),
        stats.mean_loss(),
        stats.std_error(),
        point.sigma2(),
        deviation / stats.std_error(),
    ]);
    table.write(output.format, invocation, output.out.as_deref())
}

fn oracle_check_cmd(
    n: usize,
    r: f64,
    random_probes: usize,
    seed: u64,
    tol: f64,
    output: &OutputArgs,
    invocation: &str,
) -> Result<()> {
    if n > 6 {
        bail!("oracle-check supports n <= 6");
    }
    let noise = NoiseModel::new(r)?;
    let report = oracle::self_check(n, noise, random_probes, seed)?;
    let symm_tol = tol.max(1e-9);
    let sdp_tol = tol.max(1e-5);
    let mut table = Table::new(vec!["check", "deviation", "tolerance", "pass"]);
    // rows: 0 = spin/dense equivalence, 1 = symmetrization, 2 = sdp
    table.push(vec![
        0.0,
        report.equivalence_deviation,
        tol,
        (report.equivalence_deviation <= tol) as u8 as f64,
    ]);
    table.push(vec![
        1.0,
        report.symmetrization_deviation,
        symm_tol,
        (report.symmetrization_deviation <= symm_tol) as u8 as f64,
    ]);
    table.push(vec![
        2.0,
        report.sdp_deviation,
        sdp_tol,
        (report.sdp_deviation <= sdp_tol) as u8 as f64,
    ]);
    table.write(output.format, invocation, output.out.as_deref())?;
    if report.equivalence_deviation > tol
        || report.symmetrization_deviation > symm_tol
        || report.sdp_deviation > sdp_tol
    {
        bail!(
            "oracle checks failed (equiv {:.2e}, symm {:.2e}, sdp {:.2e})",
            report.equivalence_deviation,
            report.symmetrization_deviation,
            report.sdp_deviation
        );
    }
    Ok(())
}

fn probe_gen_cmd(kind: GeneratedProbe, n: usize, r: f64, out: &std::path::Path) -> Result<()> {
    let noise = NoiseModel::new(r)?;
    let probe = match kind {
        GeneratedProbe::Multicopy => probes::multicopy(n)?,
        GeneratedProbe::Optimal => probes::optimal_gaussian(n, noise)?,
        GeneratedProbe::Ground => probes::ground_profile_probe(n, noise)?,
    };
    probes::to_file(&probe, out)?;
    Ok(())
}
