//! Terminal loop: show the pending comparison, read `1` or `2`, update.

use std::io::{BufRead, Write};
use std::path::Path;

use popbo::session::{DimensionLabel, Session};

use crate::{store, CliError};

/// How the loop ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    /// The horizon was reached.
    Finished,
    /// Input ran out first.
    EndOfInput,
}

/// Renders a point with the configured labels, e.g.
/// `Temperature 23.50 °C, Air speed 0.30 m/s`.
pub fn describe(x: &[f64], labels: &[DimensionLabel]) -> String {
    x.iter()
        .enumerate()
        .map(|(i, v)| match labels.get(i) {
            Some(l) => match &l.unit {
                Some(u) => format!("{} {v:.2} {u}", l.name),
                None => format!("{} {v:.2}", l.name),
            },
            None => format!("x{} = {v:.4}", i + 1),
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Runs until `horizon` comparisons are answered or `input` ends. The
/// checkpoint is rewritten after every answer and on exit.
pub fn run<R: BufRead, W: Write>(
    session: &mut Session,
    horizon: usize,
    checkpoint: &Path,
    input: R,
    mut out: W,
) -> Result<Exit, CliError> {
    let labels = session.config().labels.clone();
    let mut lines = input.lines();
    while session.t() < horizon {
        let duel = session.current_duel()?.clone();
        writeln!(out, "\nStep {}", duel.t)?;
        writeln!(out, "  [1] {}", describe(&duel.x, &labels))?;
        writeln!(out, "  [2] {}", describe(&duel.x_prime, &labels))?;
        let pref = loop {
            write!(out, "Which do you prefer? [1/2] ")?;
            out.flush()?;
            let Some(line) = lines.next() else {
                store::save(session, checkpoint)?;
                writeln!(out, "\nSaved {} answers to {}", session.t(), checkpoint.display())?;
                return Ok(Exit::EndOfInput);
            };
            match line?.trim() {
                "1" => break true,
                "2" => break false,
                other => writeln!(out, "Please answer 1 or 2 (got {other:?}).")?,
            }
        };
        session.observe(pref)?;
        store::save(session, checkpoint)?;
        let report = session.report_t_star()?;
        writeln!(
            out,
            "Recommended: {} (step {}, radius {:.4})",
            describe(&report.x, &labels),
            report.t_star,
            report.radius
        )?;
    }
    store::save(session, checkpoint)?;
    writeln!(out, "\nDone after {} answers.", session.t())?;
    Ok(Exit::Finished)
}
