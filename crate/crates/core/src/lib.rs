pub mod autodiff;
pub mod data;
pub mod radiomics;
pub mod rng;
pub mod contrastive;
pub mod model;
pub mod pipeline;
