//! CSV output of trajectories and branch sweeps, and 12-significant-digit
//! number formatting.

use std::io::{self, Write};

use crate::bifurcation::BranchRow;
use crate::dynamics::{Crossing, SolverStatus, Trajectory};

pub const TRAJECTORY_HEADER: &str = "t,S,I,U";
pub const BRANCH_HEADER: &str = "param,R0,dfe_class,S1,I1,U1,re_l1,im_l1,re_l2,im_l2,re_l3,im_l3,e1_class,d0_sign";

/// Scientific notation with 12 significant digits.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.11e}")
    } else {
        x.to_string()
    }
}

/// `x` rounded to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x.is_finite() {
        fmt_num(x).parse().unwrap_or(x)
    } else {
        x
    }
}

/// One row per accepted step. With `events`, an `event` column is added
/// (0 for steps, 1 for section crossings) and crossing rows are merged in
/// time order. A failed integration ends with a `# status:` comment line.
pub fn write_trajectory_csv<W: Write, const D: usize>(
    mut w: W,
    columns: [&str; D],
    traj: &Trajectory<D>,
    events: Option<&[Crossing<D>]>,
) -> io::Result<()> {
    write!(w, "t")?;
    for c in columns {
        write!(w, ",{c}")?;
    }
    if events.is_some() {
        write!(w, ",event")?;
    }
    writeln!(w)?;

    let row = |w: &mut W, t: f64, x: &[f64; D], flag: Option<u8>| -> io::Result<()> {
        write!(w, "{}", fmt_num(t))?;
        for v in x {
            write!(w, ",{}", fmt_num(*v))?;
        }
        if let Some(f) = flag {
            write!(w, ",{f}")?;
        }
        writeln!(w)
    };

    let evs = events.unwrap_or(&[]);
    let flag = |f: u8| events.map(|_| f);
    let mut k = 0;
    for (t, x) in traj.times.iter().zip(traj.states.iter()) {
        while k < evs.len() && evs[k].t < *t {
            row(&mut w, evs[k].t, &evs[k].state, flag(1))?;
            k += 1;
        }
        row(&mut w, *t, x, flag(0))?;
    }
    for e in &evs[k..] {
        row(&mut w, e.t, &e.state, flag(1))?;
    }
    if let SolverStatus::Failed(msg) = &traj.status {
        writeln!(w, "# status: failed: {msg}")?;
    }
    Ok(())
}

fn opt_num(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

pub fn write_branch_csv<W: Write>(mut w: W, rows: &[BranchRow]) -> io::Result<()> {
    writeln!(w, "{BRANCH_HEADER}")?;
    for r in rows {
        let mut cells = vec![fmt_num(r.value), opt_num(r.r0), r.dfe_class.as_str().to_string()];
        match &r.endemic {
            Some(e) => {
                cells.extend([e.coords.s, e.coords.i, e.coords.u].map(fmt_num));
                for z in &e.eigenvalues {
                    cells.push(fmt_num(z.re));
                    cells.push(fmt_num(z.im));
                }
                cells.push(e.stability.as_str().to_string());
            }
            None => cells.extend(std::iter::repeat_n(String::new(), 10)),
        }
        cells.push(r.d0_sign.map(|s| s.to_string()).unwrap_or_default());
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}
