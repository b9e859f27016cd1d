//! With one row fixed, the grand mean never settles however many columns
//! are added; with both dimensions growing its variance vanishes.

use crossed_glmm::harness::{limiting_demo, LimitingConfig};

fn main() -> crossed_glmm::Result<()> {
    for m in [Some(1), None] {
        let rows = limiting_demo(&LimitingConfig { m, n_ladder: vec![10, 100, 1000], replications: 500, seed: 1 })?;
        for r in rows {
            println!(
                "m={:<5} n={:<5} empirical {:.4}  analytic {:.4}",
                r.m, r.n, r.empirical_var, r.analytic_var
            );
        }
    }
    Ok(())
}
