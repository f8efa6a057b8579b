//! Synthetic data generators: 2D navigation and a tumor-growth surrogate.

pub mod navigation;
pub mod tumor;

pub use navigation::{generate_navigation, NavigationConfig, NavigationData, Region, RegionBox};
pub use tumor::{generate_tumor, TumorCase, TumorConfig};
