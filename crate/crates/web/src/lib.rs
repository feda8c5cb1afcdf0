//! WebAssembly bindings for the browser demo in `www/`.

use taylor_icp::PointSet;
use wasm_bindgen::prelude::*;

pub mod demo;

fn js_err(e: taylor_icp::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Warped grid for the shear and bend map; see [`demo::warp_grid`].
#[wasm_bindgen(js_name = warpGrid)]
pub fn warp_grid(a1: f64, a2: f64, a3: f64, lines: usize, samples: usize) -> Result<Vec<f64>, JsError> {
    let map = demo::shear_bend_map(a1, a2, a3).map_err(js_err)?;
    demo::warp_grid(&map, lines, samples).map_err(js_err)
}

/// A moving shape and its deformed copy.
#[wasm_bindgen]
pub struct Pair {
    moving: Vec<f64>,
    fixed: Vec<f64>,
}

#[wasm_bindgen]
impl Pair {
    #[wasm_bindgen(getter)]
    pub fn moving(&self) -> Vec<f64> {
        self.moving.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn fixed(&self) -> Vec<f64> {
        self.fixed.clone()
    }
}

#[wasm_bindgen(js_name = deformPair)]
pub fn deform_pair(shape: &str, count: usize, seed: u32, rmsd: f64) -> Result<Pair, JsError> {
    let (moving, fixed) = demo::deform_pair(shape, count, seed as u64, rmsd).map_err(js_err)?;
    Ok(Pair {
        moving: moving.into_coords(),
        fixed: fixed.into_coords(),
    })
}

#[wasm_bindgen]
pub struct Frames(demo::Frames);

#[wasm_bindgen]
impl Frames {
    #[wasm_bindgen(getter)]
    pub fn count(&self) -> usize {
        self.0.points.len()
    }

    pub fn points(&self, i: usize) -> Vec<f64> {
        self.0.points[i].clone()
    }

    pub fn label(&self, i: usize) -> String {
        self.0.labels[i].clone()
    }

    pub fn rmse(&self, i: usize) -> f64 {
        self.0.rmse[i]
    }

    /// Decimal string, since the bound can exceed 2^53.
    #[wasm_bindgen(getter, js_name = degreeBound)]
    pub fn degree_bound(&self) -> String {
        self.0.degree_bound.to_string()
    }
}

/// Registers two flat 2D coordinate arrays and returns every chain stage.
#[wasm_bindgen(js_name = registerFrames)]
pub fn register_frames(fixed: Vec<f64>, moving: Vec<f64>, order_cap: usize) -> Result<Frames, JsError> {
    let fixed = PointSet::new(2, fixed).map_err(js_err)?;
    let moving = PointSet::new(2, moving).map_err(js_err)?;
    demo::register_frames(&fixed, &moving, order_cap)
        .map(Frames)
        .map_err(js_err)
}
