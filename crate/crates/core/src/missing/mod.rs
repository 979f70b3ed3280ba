//! Pre-trained model variants for missing generator measurements.

mod bank;
mod mask;

pub use bank::{
    binomial, build_bank, predict_with_missing, train_for_mask, BankSettings, ScenarioBank,
};
pub use mask::MissingMask;
