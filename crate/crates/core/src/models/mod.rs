//! Concrete problem classes and their separated forms.

mod markov;
mod reformulated;
mod separated;

pub use markov::{random_markov_game, MarkovGame, ShapleyOutcome};
pub use reformulated::{separate_markov_game, LinearEnvelope, MarkovSeparated};
pub use separated::{
    random_minimax_control, random_separated_model, BetaScaling, MinimaxControlModel, Outcome, SeparatedMinimaxModel,
};
