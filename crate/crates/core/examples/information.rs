//! Information lost by estimating from the diagonal subset, and the
//! likelihood-ratio inequality that bounds full-data ratios by subset ratios.

use crossed_glmm::information::{check_subset_inequality, info_loss, min_eigenvalue};
use crossed_glmm::{CrossedDesign, SubsetKind, SubsetSpec, Theta};

fn main() -> crossed_glmm::Result<()> {
    let design = CrossedDesign::full_crossing(2, 3, 1)?;
    let diag = SubsetSpec::resolve(&design, SubsetKind::Diagonal);
    let theta = Theta::new(0.4, 1.0, 0.5)?;
    let m = info_loss(&design, &theta, &diag, 30)?;
    println!("full information\n{:.5}", m.i_full);
    println!("subset information\n{:.5}", m.i_subset);
    println!(
        "loss E Var(score | subset): min eigenvalue {:.3e}, identity residual {:.1e}",
        min_eigenvalue(&m.loss),
        m.residual
    );

    let square = CrossedDesign::full_crossing(2, 2, 1)?;
    let diag = SubsetSpec::resolve(&square, SubsetKind::Diagonal);
    let truth = Theta::new(0.0, 1.0, 1.0)?;
    let alt = Theta::new(0.5, 1.0, 1.0)?;
    let report = check_subset_inequality(&square, &truth, &alt, &diag, |_| 1.0, 30)?;
    report.write_csv(std::io::stdout())?;
    println!("inequality holds: {}", report.passed);
    Ok(())
}
