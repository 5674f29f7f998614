//! View-parallel projection and tracing. Views are independent, and results
//! are gathered in view order, so output does not depend on thread count.

use rayon::prelude::*;
use wernet_core::camera::CameraPose;
use wernet_core::dataset::{assemble, trace_view, DatasetOptions, RayDataset};
use wernet_core::project::{forward_project, Image};
use wernet_core::{Error as CoreError, GridGeometry, VoxelGrid};

use crate::error::{Error, Result};

pub fn project_views(grid: &VoxelGrid, layout: &[CameraPose]) -> Result<Vec<Image>> {
    Ok(layout
        .par_iter()
        .enumerate()
        .map(|(v, pose)| forward_project(grid, pose, v))
        .collect::<std::result::Result<_, _>>()?)
}

/// Same result as `wernet_core::dataset::build_dataset`.
pub fn trace_views(
    geom: &GridGeometry,
    layout: &[CameraPose],
    images: &[Image],
    options: DatasetOptions,
) -> Result<RayDataset> {
    geom.validate()?;
    if layout.len() != images.len() {
        return Err(CoreError::Param(format!("{} poses but {} images", layout.len(), images.len())).into());
    }
    let per_view = layout
        .par_iter()
        .zip(images)
        .enumerate()
        .map(|(v, (pose, image))| trace_view(geom, v, pose, image, options.include_zero_pixels))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let traced: Vec<_> = per_view.into_iter().flatten().collect();
    if traced.is_empty() {
        return Err(CoreError::EmptyDataset.into());
    }
    Ok(assemble(traced, options.seed)?)
}

/// Sizes the global pool. `None` keeps rayon's default of one thread per core.
pub fn configure_threads(threads: Option<usize>) -> Result<()> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use wernet_core::camera::{build_layout, LayoutSpec};
    use wernet_core::dataset::build_dataset;
    use wernet_core::phantom::make_turbulent_flame;

    #[test]
    fn matches_the_sequential_pipeline() {
        let g = GridGeometry::centered([8, 20, 8], 0.5).unwrap();
        let grid = make_turbulent_flame(g, 5).unwrap();
        let spec = LayoutSpec {
            n_views: 4,
            view_angle_step: 45.0,
            rows: 10,
            cols: 30,
            ..LayoutSpec::default()
        };
        let layout = build_layout(&spec, &g).unwrap();
        let images = project_views(&grid, &layout).unwrap();
        for (v, (img, pose)) in images.iter().zip(&layout).enumerate() {
            assert_eq!(img, &forward_project(&grid, pose, v).unwrap());
        }
        let options = DatasetOptions {
            include_zero_pixels: false,
            seed: 9,
        };
        let ours = trace_views(&g, &layout, &images, options).unwrap();
        assert_eq!(ours, build_dataset(&g, &layout, &images, options).unwrap());
    }
}
