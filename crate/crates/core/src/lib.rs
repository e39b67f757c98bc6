//! Few-shot electricity load forecasting with clustering-derived prior knowledge.
//!
//! The pipeline: historical multi-user load series are featurized with wavelet-packet
//! energy descriptors and statistical descriptors, consensus-clustered (CSPA over a
//! co-association matrix), and each cluster's denoised prototype pretrains a small
//! LSTM forecaster that is fine-tuned on a k-shot sample from a new user and
//! evaluated on a 72-step horizon.
//!
//! Modules map onto the pipeline stages:
//!
//! - [`series`] — canonical series representation, resampling, few-shot splitting
//! - [`wavelet`] — DWT / wavelet-packet transforms and threshold denoising
//! - [`features`] — DWE/LWE/WCC wavelet descriptors, statistical descriptors, PCA
//! - [`clustering`] — base clusterers, CSPA consensus, silhouette, query assignment
//! - [`forecaster`] — from-scratch LSTM with Adam, two-phase training, recursion
//! - [`metrics`] — RMSE/MRMSE conventions and outlier-trimmed aggregates
//! - [`data`] — CSV ingestion and the synthetic clustered-sinusoid dataset
//! - [`experiment`] — end-to-end case runners and result emission

pub mod clustering;
pub mod data;
pub mod error;
pub mod experiment;
pub mod features;
pub mod forecaster;
pub mod metrics;
pub mod seed;
pub mod series;
pub mod wavelet;

pub use error::{Error, Result};
pub use series::Series;
