//! Exact analysis and simulation of fail-stop attacks on two-party coin-flipping protocols.
//!
//! The crate models finite, information-theoretic two-party protocols whose parties hold bounded
//! integer tapes, exchange small-integer messages and keep a *backup bit* they output when the
//! counterpart aborts. On top of exhaustive enumeration it provides:
//!
//! * [`oracle`]: conditional expectations of the output and of backup values, Doob martingales
//!   along transcripts or forecast sequences, jump probabilities, and the optimal fail-stop
//!   adversary computed by backward induction.
//! * [`forecaster`]: an exact, quantized forecaster of each party's backup value and the expected
//!   outcome function `g` conditioned on forecast prefixes.
//! * [`estimator`]: the sampling approximator of `g` with its Hoeffding-derived sample count.
//! * [`attacks`]: the threshold attackers built from these pieces and a numeric certificate of
//!   the bias-bound chain for the forecaster-based attacker.
//! * [`independence`]: the stop-and-test protocol variant, an exact decorrelator and the
//!   correlation between an attack decision and the honest party's backup value.
//! * [`zoo`]: reference protocols.
//!
//! ```
//! use fairflip::{oracle, zoo, PartyId};
//!
//! let blum = zoo::blum();
//! let (bias, _strategy) = oracle::optimal_failstop(&blum, PartyId::A, 1).unwrap();
//! assert_eq!(bias, fairflip::num::ratio(1, 4));
//! ```

pub mod attacks;
pub mod error;
pub mod estimator;
pub mod forecaster;
pub mod independence;
pub mod num;
pub mod oracle;
pub mod protocol;
pub mod rng;
pub mod tree;
pub mod zoo;

pub use error::{Error, Result};
pub use forecaster::{Forecast, ForecastSeed, ForecasterSpec};
pub use num::Rational;
pub use oracle::{BiasReport, ExactOracle, FailStopStrategy, MartingaleSequence, MeasureMode};
pub use protocol::{ExecutionRecord, PartyId, ProtocolSpec, Symbol, Tape, TranscriptPrefix, BOTTOM};
