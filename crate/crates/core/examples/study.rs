//! A small consistency study: subset and Monte-Carlo full MLE of the mean
//! along a size ladder, written as CSV to stdout with median errors on
//! stderr.

use crossed_glmm::harness::{run_study, write_study_csv, EstimatorKind, StudyConfig};
use crossed_glmm::Theta;

fn main() -> crossed_glmm::Result<()> {
    let theta0 = Theta::mu_only(0.5, 1.0, 1.0)?;
    let mut cfg = StudyConfig::new(
        vec![(5, 5), (10, 10), (20, 20)],
        20,
        theta0,
        vec![EstimatorKind::Subset, EstimatorKind::FullMc],
    );
    cfg.threads = 2;
    let rows = run_study(&cfg)?;
    write_study_csv(&rows, std::io::stdout())?;
    for (m, n) in &cfg.sizes {
        for est in ["subset", "full_mc"] {
            let mut errs: Vec<f64> = rows
                .iter()
                .filter(|r| r.m == *m && r.n == *n && r.estimator == est)
                .map(|r| if r.abs_error.is_nan() { f64::INFINITY } else { r.abs_error })
                .collect();
            errs.sort_by(f64::total_cmp);
            eprintln!("{m}x{n} {est:<8} median |error| {:.3}", errs[errs.len() / 2]);
        }
    }
    Ok(())
}
