//! Closed-form budget report for a preset, with an optional parameter sweep.

use atomnum_core::budget::{
    estimator_variance, min_fano, min_variance, optimal_nsc, optimal_squeezing, squeezing, squeezing_threshold_ok,
    BudgetParams, Preset,
};
use atomnum_core::bayes::to_db;
use serde::Serialize;

use super::{open_run, Command, Outcome, RunOptions};
use crate::config::{LoadedConfig, RunConfig, SweepVariable};
use crate::error::CliResult;
use crate::output::num;
use crate::svg::{Chart, Series};

#[derive(Debug, Clone, Serialize)]
pub struct Inputs {
    pub preset: Preset,
    pub n_total: f64,
    /// Atoms in the probed level.
    pub n_atoms: f64,
    pub q: f64,
    pub alpha_at: f64,
    /// `None` when loss is neglected.
    pub n_loss: Option<f64>,
    pub prior_var: Option<f64>,
    pub d0: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BudgetReport {
    pub inputs: Inputs,
    pub n_sc_opt: Option<f64>,
    pub var_min: Option<f64>,
    pub fano_min: Option<f64>,
    pub fano_min_db: Option<f64>,
    /// Variance at `n_sc_opt` including the configured prior.
    pub var_at_n_sc_opt: Option<f64>,
    pub xi_n_sc_opt: f64,
    pub xi_opt: f64,
    pub xi_opt_db: f64,
    pub threshold_ok: bool,
    pub notes: Vec<String>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn notes_for(preset: Preset) -> Vec<String> {
    match preset {
        Preset::Preparation => vec![
            "The commonly quoted preparation values n_sc = 2.4 and -11 dB follow from these formulas at N of about 1000; \
             at N = 2500 they give n_sc = 1.53 and -12.6 dB. Formula outputs are reported unchanged."
                .into(),
        ],
        Preset::Tomography => vec![
            "A quoted tomography figure of -8 dB is not reproduced by the minimum-Fano formula for any stated parameter set \
             (N = 1250, n_loss = 30 gives -9.8 dB). Formula outputs are reported unchanged."
                .into(),
        ],
        Preset::Squeezing => vec!["Atom loss is neglected for squeezing; only the Ramsey contrast penalty applies.".into()],
    }
}

pub fn report(cfg: &RunConfig) -> CliResult<BudgetReport> {
    let b = &cfg.budget;
    let alpha = cfg.budget_alpha();
    let q = cfg.q();
    let mut p = b.preset.params(b.n_atoms, q, alpha);
    if let Some(n_loss) = b.n_loss {
        p.n_loss = n_loss;
    }
    let d0 = p.alpha_at * p.n_atoms;
    let lossy = p.n_loss.is_finite();
    let (n_sc_opt, var_min, fano) = if lossy {
        (
            Some(optimal_nsc(p.n_atoms, q, alpha, p.n_loss)?),
            Some(min_variance(p.n_atoms, q, alpha, p.n_loss)?),
            Some(min_fano(p.n_atoms, q, alpha, p.n_loss)?),
        )
    } else {
        (None, None, None)
    };
    let var_at_opt = n_sc_opt
        .map(|n_sc| {
            estimator_variance(&BudgetParams {
                prior_var: b.prior_var.unwrap_or(f64::INFINITY),
                q,
                alpha_at: alpha,
                n_atoms: p.n_atoms,
                n_loss: p.n_loss,
                n_sc,
            })
        })
        .transpose()?;
    let xi = optimal_squeezing(q, d0)?;
    Ok(BudgetReport {
        inputs: Inputs {
            preset: b.preset,
            n_total: b.n_atoms,
            n_atoms: p.n_atoms,
            q,
            alpha_at: alpha,
            n_loss: finite(p.n_loss),
            prior_var: b.prior_var,
            d0,
        },
        n_sc_opt,
        var_min,
        fano_min: fano.map(|f| f.fano),
        fano_min_db: fano.map(|f| f.fano_db),
        var_at_n_sc_opt: var_at_opt,
        xi_n_sc_opt: xi.n_sc,
        xi_opt: xi.xi,
        xi_opt_db: xi.xi_db,
        threshold_ok: squeezing_threshold_ok(q, d0),
        notes: notes_for(b.preset),
    })
}

pub const N_SC_HEADER: [&str; 4] = ["n_sc", "variance", "fano_db", "xi_db"];
pub const N_ATOMS_HEADER: [&str; 5] = ["n_atoms", "n_sc_opt", "var_min", "fano_min_db", "xi_opt_db"];

fn grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect()
}

/// Rows of the configured sweep: header plus numeric columns.
pub fn sweep_table(cfg: &RunConfig, rep: &BudgetReport) -> CliResult<Option<(&'static [&'static str], Vec<Vec<f64>>)>> {
    let b = &cfg.budget;
    let Some(var) = b.sweep else { return Ok(None) };
    let inp = &rep.inputs;
    let n_loss = inp.n_loss.unwrap_or(f64::INFINITY);
    let xs = grid(b.sweep_min, b.sweep_max, b.sweep_points);
    match var {
        SweepVariable::NSc => {
            let rows = xs
                .iter()
                .map(|&n_sc| {
                    let v = estimator_variance(&BudgetParams {
                        prior_var: b.prior_var.unwrap_or(f64::INFINITY),
                        q: inp.q,
                        alpha_at: inp.alpha_at,
                        n_atoms: inp.n_atoms,
                        n_loss,
                        n_sc,
                    })?;
                    let xi = squeezing(n_sc, inp.q, inp.d0)?;
                    Ok(vec![n_sc, v, to_db(v / inp.n_atoms), xi.xi_db])
                })
                .collect::<CliResult<_>>()?;
            Ok(Some((&N_SC_HEADER, rows)))
        }
        SweepVariable::NAtoms => {
            let scale = inp.n_atoms / inp.n_total;
            let rows = xs
                .iter()
                .map(|&n_total| {
                    let n = n_total * scale;
                    let (opt, vmin, fdb) = if n_loss.is_finite() {
                        (
                            optimal_nsc(n, inp.q, inp.alpha_at, n_loss)?,
                            min_variance(n, inp.q, inp.alpha_at, n_loss)?,
                            min_fano(n, inp.q, inp.alpha_at, n_loss)?.fano_db,
                        )
                    } else {
                        (f64::NAN, f64::NAN, f64::NAN)
                    };
                    let xi = optimal_squeezing(inp.q, inp.alpha_at * n)?;
                    Ok(vec![n_total, opt, vmin, fdb, xi.xi_db])
                })
                .collect::<CliResult<_>>()?;
            Ok(Some((&N_ATOMS_HEADER, rows)))
        }
    }
}

pub fn run(loaded: &LoadedConfig, opts: &RunOptions) -> CliResult<Outcome> {
    let cfg = &loaded.config;
    let rep = report(cfg)?;
    let table = sweep_table(cfg, &rep)?;
    let mut out = open_run(Command::Budget, loaded, opts, &[])?;
    out.write_json("budget.json", &rep)?;
    if let Some((header, rows)) = &table {
        let text_rows = rows.iter().map(|r| r.iter().map(|&v| num(v)).collect());
        out.write_csv("budget_sweep.csv", header, text_rows)?;
        if opts.svg {
            let x: Vec<f64> = rows.iter().map(|r| r[0]).collect();
            let (y, y_label): (Vec<f64>, _) = match cfg.budget.sweep {
                Some(SweepVariable::NSc) => (rows.iter().map(|r| r[2]).collect(), "Fano factor (dB)"),
                _ => (rows.iter().map(|r| r[3]).collect(), "min Fano factor (dB)"),
            };
            let chart = Chart {
                title: "Single-step measurement budget",
                x_label: header[0],
                y_label,
                log_x: false,
                log_y: false,
                series: vec![Series { label: "closed form", x: &x, y: &y, dashed: false }],
            };
            out.write_bytes("budget.svg", chart.render().as_bytes())?;
        }
    }
    let fmt = |v: Option<f64>| v.map_or("n/a".to_owned(), |x| format!("{x:.4}"));
    let summary = format!(
        "preset {:?}: n_sc_opt {}, fano_min {} dB, xi_opt {:.2} dB at n_sc {:.4}, q*d0 > 4: {}",
        rep.inputs.preset,
        fmt(rep.n_sc_opt),
        fmt(rep.fano_min_db),
        rep.xi_opt_db,
        rep.xi_n_sc_opt,
        rep.threshold_ok
    );
    Ok(Outcome {
        dir: out.finish()?,
        summary,
    })
}
