//! Prints the cumulative coverage of a short left-padded history and the four
//! views derived from it.

use covrec::config::{Augmentation, Phi};
use covrec::coverage::{coverage_sequence, ordinals_from_mask, AugmentationConfig, CoverageState, Layout};
use covrec::numerics::Tensor;

fn main() -> covrec::Result<()> {
    // Two padding slots, then three items with 3-dim representations.
    let mask = [false, false, true, true, true];
    let r = Tensor::new(
        vec![5, 3],
        vec![
            0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, //
            1.0, 0.0, 0.5, //
            0.0, 2.0, 0.5, //
            1.0, 1.0, 0.5,
        ],
    )?;
    let layout = Layout::new(ordinals_from_mask(&mask), mask.len())?;
    println!("coverage:\n{}", fmt(&coverage_sequence(&r, &layout)?));

    let state = CoverageState::new(&r, &layout, &AugmentationConfig::default(), Phi::ALL_ON)?;
    for a in Augmentation::ALL {
        println!("{}:\n{}", a.label(), fmt(state.view(a)));
    }
    Ok(())
}

fn fmt(t: &Tensor<f64>) -> String {
    (0..t.rows())
        .map(|i| {
            let row: Vec<String> = t.row(i).iter().map(|v| format!("{v:8.4}")).collect();
            format!("  {}", row.join(" "))
        })
        .collect::<Vec<_>>()
        .join("\n")
}
