//! Stage-two policies: a latent policy `o_t -> z_t` decoded through the
//! LAM's action decoder, plus baselines that act directly.

mod baselines;
mod error;
mod eval;
mod latent;
mod regress;

pub use baselines::{train_bc_al, train_clam, train_lapo_style, train_vpt, BcPolicy, ClamRun, VptReport};
pub use error::{PolicyError, Result};
pub use eval::{evaluate, read_eval_csv, write_eval_csv, Controller, EvalReport, EvalRow, RandomController, ScriptedExpert, EVAL_HEADER};
pub use latent::{train_latent_policy, ClamAgent, LatentPolicy, PolicyConfig, PolicyInit};
