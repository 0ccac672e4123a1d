use std::io::Write;

use super::{PlannerInstance, TableOption};
use crate::error::Result;

const TERMS_PER_LINE: usize = 6;

struct Lp<W: Write> {
    out: W,
}

impl<W: Write> Lp<W> {
    fn comment(&mut self, text: &str) -> Result<()> {
        writeln!(self.out, "\\ {text}")?;
        Ok(())
    }

    /// Writes `name: terms rel rhs`, wrapping long sums.
    fn row(&mut self, name: &str, terms: &[(f64, String)], rel: &str, rhs: f64) -> Result<()> {
        write!(self.out, " {name}:")?;
        for (i, (coef, var)) in terms.iter().enumerate() {
            if i > 0 && i % TERMS_PER_LINE == 0 {
                write!(self.out, "\n   ")?;
            }
            let sign = if *coef < 0.0 { '-' } else { '+' };
            write!(self.out, " {sign} {} {var}", coef.abs())?;
        }
        if terms.is_empty() {
            write!(self.out, " + 0 d_0")?;
        }
        writeln!(self.out, " {rel} {rhs}")?;
        Ok(())
    }
}

/// Exports the planning problem as a mixed-integer program in CPLEX LP format.
///
/// `d_m` is 1 when device `m` runs an EMB core, `p_m_j` places table `j` on
/// device `m`, `x_j_o` selects grid option `o` of table `j` (options are
/// enumerated in `(dram, tt)` order and already respect the hot threshold) and
/// `z_m_j_o` linearises their product. `u_k` selects the EMB device count.
pub fn write_lp<W: Write>(instance: &PlannerInstance, out: W) -> Result<()> {
    let mut lp = Lp { out };
    let m_count = instance.num_devices();
    let j_count = instance.num_tables();
    let options: Vec<_> = (0..j_count).map(|j| instance.options(j)).collect();
    let p = &instance.profile;
    let ks: Vec<usize> = (1..m_count).collect();

    lp.comment(&format!(
        "{m_count} devices, {j_count} tables, batch {} (mini-batch {})",
        p.batch_size, p.mini_batch
    ))?;
    for (j, opts) in options.iter().enumerate() {
        for (o, opt) in opts.iter().enumerate() {
            lp.comment(&format!(
                "x_{j}_{o}: table {} dram {} tt {}",
                instance.specs[j].table_id, opt.grid.dram, opt.grid.tt
            ))?;
        }
    }
    writeln!(lp.out, "Minimize\n obj: + 1 fnt + 1 top")?;
    writeln!(lp.out, "Subject To")?;

    lp.comment("device-allocation")?;
    let mut terms: Vec<(f64, String)> = (0..m_count).map(|m| (1.0, format!("d_{m}"))).collect();
    terms.extend(ks.iter().map(|&k| (-(k as f64), format!("u_{k}"))));
    lp.row("alloc_count", &terms, "=", 0.0)?;
    let terms: Vec<_> = ks.iter().map(|&k| (1.0, format!("u_{k}"))).collect();
    lp.row("alloc_one", &terms, "=", 1.0)?;

    lp.comment("table-assignment")?;
    for j in 0..j_count {
        let terms: Vec<_> = (0..m_count).map(|m| (1.0, format!("p_{m}_{j}"))).collect();
        lp.row(&format!("assign_{j}"), &terms, "=", 1.0)?;
    }

    lp.comment("table-on-mlp-device")?;
    for m in 0..m_count {
        for j in 0..j_count {
            let terms = [(1.0, format!("p_{m}_{j}")), (-1.0, format!("d_{m}"))];
            lp.row(&format!("emb_only_{m}_{j}"), &terms, "<=", 0.0)?;
        }
    }

    lp.comment("grid-bounds and hot-threshold")?;
    for (j, opts) in options.iter().enumerate() {
        let terms: Vec<_> = (0..opts.len())
            .map(|o| (1.0, format!("x_{j}_{o}")))
            .collect();
        lp.row(&format!("grid_{j}"), &terms, "=", 1.0)?;
    }

    lp.comment("linearisation of placement times grid choice")?;
    for (j, opts) in options.iter().enumerate() {
        for m in 0..m_count {
            let mut terms: Vec<_> = (0..opts.len())
                .map(|o| (1.0, format!("z_{m}_{j}_{o}")))
                .collect();
            terms.push((-1.0, format!("p_{m}_{j}")));
            lp.row(&format!("link_p_{m}_{j}"), &terms, "=", 0.0)?;
        }
        for o in 0..opts.len() {
            let mut terms: Vec<_> = (0..m_count)
                .map(|m| (1.0, format!("z_{m}_{j}_{o}")))
                .collect();
            terms.push((-1.0, format!("x_{j}_{o}")));
            lp.row(&format!("link_x_{j}_{o}"), &terms, "=", 0.0)?;
        }
    }

    let per_device = |m: usize, f: &dyn Fn(&TableOption) -> f64| -> Vec<(f64, String)> {
        let mut terms = Vec::new();
        for (j, opts) in options.iter().enumerate() {
            for (o, opt) in opts.iter().enumerate() {
                let v = f(opt);
                if v != 0.0 {
                    terms.push((v, format!("z_{m}_{j}_{o}")));
                }
            }
        }
        terms
    };

    for (r, (label, cap)) in [
        ("dram-capacity", p.cap_dram),
        ("bram-capacity (tt-compressed-size)", p.cap_bram),
        ("ssd-capacity", p.cap_ssd),
    ]
    .into_iter()
    .enumerate()
    {
        lp.comment(label)?;
        for m in 0..m_count {
            let terms = per_device(m, &|o| o.usage()[r] as f64);
            lp.row(&format!("cap_{r}_{m}"), &terms, "<=", cap as f64)?;
        }
    }

    lp.comment("cost-definition")?;
    for (r, tier) in ["dram", "tt", "ssd"].into_iter().enumerate() {
        for m in 0..m_count {
            let mut terms = per_device(m, &|o| o.cost[r]);
            terms.push((-1.0, "fnt".to_string()));
            lp.row(&format!("c_{tier}_{m}"), &terms, "<=", 0.0)?;
        }
    }
    let mut bot: Vec<_> = vec![(1.0, "bot".to_string())];
    let mut top: Vec<_> = vec![(1.0, "top".to_string())];
    for &k in &ks {
        let (b, t) = instance.mlp_costs(m_count - k);
        bot.push((-b, format!("u_{k}")));
        top.push((-t, format!("u_{k}")));
    }
    lp.row("c_mlp_bot", &bot, "=", 0.0)?;
    lp.row("c_mlp_top", &top, "=", 0.0)?;
    lp.row(
        "c_fnt",
        &[(1.0, "fnt".into()), (-1.0, "bot".into())],
        ">=",
        0.0,
    )?;

    writeln!(lp.out, "Binary")?;
    let mut names: Vec<String> = (0..m_count).map(|m| format!("d_{m}")).collect();
    names.extend(ks.iter().map(|k| format!("u_{k}")));
    for j in 0..j_count {
        names.extend((0..m_count).map(|m| format!("p_{m}_{j}")));
        names.extend((0..options[j].len()).map(|o| format!("x_{j}_{o}")));
        for m in 0..m_count {
            names.extend((0..options[j].len()).map(|o| format!("z_{m}_{j}_{o}")));
        }
    }
    for chunk in names.chunks(TERMS_PER_LINE * 2) {
        writeln!(lp.out, " {}", chunk.join(" "))?;
    }
    writeln!(lp.out, "End")?;
    lp.out.flush()?;
    Ok(())
}
