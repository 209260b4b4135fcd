//! EL ontology embedding in the Poincaré ball.
//!
//! Ontologies are parsed from OWL functional syntax, normalized into the four
//! EL normal forms, verbalized into text and encoded into a hyperbolic ball.
//! Existential restrictions are modelled by per-role rotation-and-scaling
//! maps and trained with contrastive and centripetal hinge losses.

pub mod checkpoint;
pub mod config;
pub mod encoder;
pub mod eval;
pub mod geometry;
pub mod normalize;
pub mod ontology;
pub mod reasoner;
pub mod trainer;
pub mod verbalize;

pub use checkpoint::Checkpoint;
pub use config::TrainConfig;
pub use geometry::{BallSpec, PoincarePoint};
pub use normalize::{normalize, Atom, NormalizedAxiom};
pub use ontology::{Axiom, Concept, Iri, LabelMap, Ontology};
