//! Logical coherence of CLIP-like joint embedding models.
//!
//! A CLIP-like model embeds images and captions in one latent space and
//! scores a caption against an image by cosine similarity. Reading "the model
//! prefers `d` over `not d`" as truth gives every model a propositional
//! semantics over its captions. This crate implements that semantics and
//! audits whether a concrete model is *complete*: whether every true
//! caption scores exactly `+1` and every false atom exactly `-1`.
//!
//! For any model whose images are described by, and separated by, their
//! atoms, completeness is impossible under cosine similarity;
//! [`semantics::find_violation`] produces a concrete witness for any such
//! model. The [`search`] module explores the same constraints numerically,
//! including relaxed tolerances and other similarity functions.
//!
//! Modules:
//! - [`logic`]: caption syntax, parser, enumeration, boolean oracle
//! - [`geometry`]: cosine similarity, its gradient, softmax, rays
//! - [`semantics`]: models, satisfaction/entailment, audits, certificates
//! - [`search`]: constraint building and gradient-based feasibility runs
//! - [`io`]: lossless JSON/CSV number formatting

pub mod geometry;
pub mod io;
pub mod logic;
pub mod search;
pub mod semantics;
