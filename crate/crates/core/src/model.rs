//! JSON container for a trained kernel dictionary.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ShapeBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RkdlError};
use crate::experiment::Method;
use crate::kernel_dl::{KdlConfig, KernelDictionary, TrainTrace};
use crate::kernels::KernelSpec;
use crate::linear_dl::Dictionary;

pub const MODEL_FORMAT: &str = "rkdl-model";
pub const MODEL_VERSION: u32 = 1;

/// Dense matrix stored column-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixRecord {
    pub fn from_array(m: &Array2<f64>) -> Self {
        MatrixRecord {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.t().iter().copied().collect(),
        }
    }

    pub fn to_array(&self) -> Result<Array2<f64>> {
        Array2::from_shape_vec((self.rows, self.cols).f(), self.data.clone())
            .map(|a| a.as_standard_layout().into_owned())
            .map_err(|e| RkdlError::InvalidParameter(format!("matrix record: {e}")))
    }
}

/// Saved model: kernel, kernel vectors `D`, coefficients `A`, the training
/// configuration and trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelContainer {
    pub format: String,
    pub version: u32,
    pub method: Method,
    pub spec: KernelSpec,
    pub d: MatrixRecord,
    pub a: MatrixRecord,
    pub config: KdlConfig,
    pub trace: TrainTrace,
}

impl ModelContainer {
    pub fn new(method: Method, model: &KernelDictionary, config: KdlConfig, trace: TrainTrace) -> Self {
        ModelContainer {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            method,
            spec: model.spec,
            d: MatrixRecord::from_array(&model.d.atoms),
            a: MatrixRecord::from_array(&model.a),
            config,
            trace,
        }
    }

    pub fn kernel_dictionary(&self) -> Result<KernelDictionary> {
        Ok(KernelDictionary {
            a: self.a.to_array()?,
            d: Dictionary::new(self.d.to_array()?),
            spec: self.spec,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| RkdlError::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, self).map_err(|e| RkdlError::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        w.flush().map_err(|e| RkdlError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| RkdlError::io(path, e))?;
        let c: ModelContainer =
            serde_json::from_reader(BufReader::new(file)).map_err(|e| RkdlError::Json {
                path: path.to_path_buf(),
                source: e,
            })?;
        if c.format != MODEL_FORMAT || c.version != MODEL_VERSION {
            return Err(RkdlError::format(
                path,
                format!("unsupported model container {} v{}", c.format, c.version),
            ));
        }
        Ok(c)
    }
}
