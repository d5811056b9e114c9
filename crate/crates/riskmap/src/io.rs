//! File formats: GeoJSON boundaries, dataset CSV, posterior tables,
//! choropleth export, run configuration, and the run archive layout.

pub mod archive;
pub mod choropleth;
pub mod config;
pub mod dataset;
pub mod geojson;
pub mod table;
